#include "sgldvr/dynamics.hpp"

#include <cmath>

#include "sgldvr/errors.hpp"
#include "sgldvr/rng.hpp"

namespace sgldvr {

void DecaySchedule::validate() const {
  if (eta0 <= 0.0) throw ConfigError("schedule: eta0 must be positive");
  if (rho0 < 0.0) throw ConfigError("schedule: rho0 must be nonnegative");
  if (nu < 1.0) throw ConfigError("schedule: decay exponent nu must be >= 1");
  if (index_offset < 1) throw ConfigError("schedule: index_offset must be >= 1");
}

double DecaySchedule::eta(long long t) const {
  return eta0 / std::pow(static_cast<double>(t + index_offset), nu);
}

double DecaySchedule::rho(long long t) const {
  return rho0 / std::pow(static_cast<double>(t + index_offset), 0.5 * nu);
}

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::with_replacement ? "with_replacement"
                                                : "without_replacement";
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::sgd: return "sgd";
    case Variant::sgld: return "sgld";
    default: return "sgld-vr";
  }
}

SamplingMode sampling_mode_from_string(const std::string& s) {
  if (s == "with_replacement") return SamplingMode::with_replacement;
  if (s == "without_replacement") return SamplingMode::without_replacement;
  throw ConfigError("unknown sampling mode: " + s);
}

Variant variant_from_string(const std::string& s) {
  if (s == "sgd") return Variant::sgd;
  if (s == "sgld") return Variant::sgld;
  if (s == "sgld-vr" || s == "sgld_vr") return Variant::sgld_vr;
  throw ConfigError("unknown variant: " + s);
}

void SgldVrConfig::validate(std::size_t n_components) const {
  schedule.validate();
  if (batch_size == 0) throw ConfigError("config: batch size must be >= 1");
  if (batch_size > n_components)
    throw ConfigError("config: batch size exceeds component count");
  if (epoch_length == 0) throw ConfigError("config: epoch length must be >= 1");
  if (horizon < 0) throw ConfigError("config: horizon must be nonnegative");
  if (horizon % static_cast<long long>(epoch_length) != 0)
    throw ConfigError("config: horizon must be a multiple of the epoch length");
}

SgldVrState make_state(const FiniteSumObjective& obj, std::span<const double> x0,
                       std::uint64_t stream_key) {
  if (x0.size() != obj.dimension())
    throw ConfigError("initial point dimension mismatch");
  SgldVrState state;
  state.x.assign(x0.begin(), x0.end());
  state.snapshot = state.x;
  obj.full_gradient(state.snapshot, state.snapshot_grad);
  state.stream_key = stream_key;
  return state;
}

Vec svrg_estimator(const FiniteSumObjective& obj, const SgldVrState& state,
                   std::span<const std::size_t> batch) {
  if (batch.empty()) throw ConfigError("svrg_estimator: empty batch");
  const std::size_t d = obj.dimension();
  Vec estimator(d, 0.0);
  Vec g(d);
  for (std::size_t i : batch) {
    if (i >= obj.component_count())
      throw ConfigError("svrg_estimator: component index out of range");
    obj.component_gradient(i, state.x, g);
    axpy(1.0, g, estimator);
    obj.component_gradient(i, state.snapshot, g);
    axpy(-1.0, g, estimator);
    axpy(1.0, state.snapshot_grad, estimator);
  }
  scale(estimator, 1.0 / static_cast<double>(batch.size()));
  return estimator;
}

namespace {

void draw_batch(RandomStream& stream, const SgldVrConfig& config, std::size_t n,
                std::vector<std::size_t>& batch, std::vector<std::size_t>& scratch) {
  if (config.sampling == SamplingMode::with_replacement)
    stream.sample_with_replacement(n, config.batch_size, batch);
  else
    stream.sample_without_replacement(n, config.batch_size, batch, scratch);
}

struct StepWorkspace {
  std::vector<std::size_t> batch;
  std::vector<std::size_t> scratch;
  Vec estimator;
  Vec g;
  Vec noise;
};

void advance(const FiniteSumObjective& obj, const SgldVrConfig& config,
             Variant variant, SgldVrState& state, StepWorkspace& ws) {
  const std::size_t d = obj.dimension();
  const auto epoch_len = static_cast<long long>(config.epoch_length);

  if (variant == Variant::sgld_vr && state.t % epoch_len == 0) {
    state.snapshot = state.x;
    obj.full_gradient(state.snapshot, state.snapshot_grad);
    state.epoch = state.t / epoch_len;
  }

  RandomStream stream(derive_key(state.stream_key, static_cast<std::uint64_t>(state.t)));
  draw_batch(stream, config, obj.component_count(), ws.batch, ws.scratch);

  ws.estimator.assign(d, 0.0);
  if (variant == Variant::sgld_vr) {
    for (std::size_t i : ws.batch) {
      obj.component_gradient(i, state.x, ws.g);
      axpy(1.0, ws.g, ws.estimator);
      obj.component_gradient(i, state.snapshot, ws.g);
      axpy(-1.0, ws.g, ws.estimator);
      axpy(1.0, state.snapshot_grad, ws.estimator);
    }
  } else {
    for (std::size_t i : ws.batch) {
      obj.component_gradient(i, state.x, ws.g);
      axpy(1.0, ws.g, ws.estimator);
    }
  }
  scale(ws.estimator, 1.0 / static_cast<double>(ws.batch.size()));

  const auto [eta_t, rho_sched] = config.schedule.eval(state.t);
  const double rho_t = (variant == Variant::sgd) ? 0.0 : rho_sched;
  axpy(-eta_t, ws.estimator, state.x);
  if (rho_t > 0.0) {
    ws.noise.resize(d);
    stream.normal_vector(ws.noise);
    axpy(rho_t, ws.noise, state.x);
  }
  ++state.t;

  if (!all_finite(state.x))
    throw DivergenceError(state.t, "iterate diverged (non-finite) at step " +
                                       std::to_string(state.t));
}

RunTrace run_impl(const FiniteSumObjective& obj, const SgldVrConfig& config,
                  std::span<const double> x0, std::uint64_t seed, Variant variant,
                  const RunOptions& options) {
  config.validate(obj.component_count());
  if (options.record_stride < 1) throw ConfigError("record stride must be >= 1");

  SgldVrState state = make_state(obj, x0, derive_key(seed, 0));
  StepWorkspace ws;

  RunTrace trace;
  trace.seed = seed;
  trace.objective_id = options.objective_id;
  trace.config = config_to_json(config);
  trace.config["variant"] = to_string(variant);
  trace.config["record_stride"] = options.record_stride;
  trace.config["x0"] = nlohmann::json(std::vector<double>(x0.begin(), x0.end()));
  trace.provenance = "sgldvr-0.1.0 cfg:" +
                     std::to_string(fnv1a64(trace.config.dump() + "#" +
                                            std::to_string(seed) + "#" +
                                            options.objective_id));

  Vec grad(obj.dimension());
  auto record = [&](long long t) {
    TraceRecord rec;
    rec.t = t;
    rec.f = obj.full_value(state.x);
    obj.full_gradient(state.x, grad);
    rec.grad_norm = norm(grad);
    if (!std::isfinite(rec.f) || !std::isfinite(rec.grad_norm))
      throw DivergenceError(t, "non-finite objective value at step " + std::to_string(t));
    if (options.record_iterates) rec.x = state.x;
    trace.records.push_back(std::move(rec));
  };

  record(0);
  for (long long t = 0; t < config.horizon; ++t) {
    advance(obj, config, variant, state, ws);
    if (state.t == config.horizon || state.t % options.record_stride == 0)
      record(state.t);
  }
  return trace;
}

}  // namespace

void step(const FiniteSumObjective& obj, const SgldVrConfig& config,
          SgldVrState& state) {
  StepWorkspace ws;
  advance(obj, config, Variant::sgld_vr, state, ws);
}

RunTrace run(const FiniteSumObjective& obj, const SgldVrConfig& config,
             std::span<const double> x0, std::uint64_t seed,
             const RunOptions& options) {
  return run_impl(obj, config, x0, seed, Variant::sgld_vr, options);
}

RunTrace run_baseline(const FiniteSumObjective& obj, const SgldVrConfig& config,
                      std::span<const double> x0, std::uint64_t seed,
                      Variant variant, const RunOptions& options) {
  return run_impl(obj, config, x0, seed, variant, options);
}

std::uint64_t trajectory_stream_key(std::uint64_t seed) { return derive_key(seed, 0); }

Vec replay_step_noise(const FiniteSumObjective& obj, const SgldVrConfig& config,
                      std::uint64_t stream_key, long long t) {
  RandomStream stream(derive_key(stream_key, static_cast<std::uint64_t>(t)));
  std::vector<std::size_t> batch, scratch;
  draw_batch(stream, config, obj.component_count(), batch, scratch);
  Vec noise(obj.dimension());
  stream.normal_vector(noise);
  return noise;
}

nlohmann::json schedule_to_json(const DecaySchedule& schedule) {
  return {{"eta0", schedule.eta0},
          {"rho0", schedule.rho0},
          {"nu", schedule.nu},
          {"index_offset", schedule.index_offset}};
}

nlohmann::json config_to_json(const SgldVrConfig& config) {
  return {{"batch_size", config.batch_size},
          {"epoch_length", config.epoch_length},
          {"horizon", config.horizon},
          {"schedule", schedule_to_json(config.schedule)},
          {"sampling", to_string(config.sampling)}};
}

}  // namespace sgldvr
