#ifndef SGLDVR_DYNAMICS_HPP
#define SGLDVR_DYNAMICS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sgldvr/objectives.hpp"
#include "sgldvr/trace.hpp"
#include "sgldvr/vec.hpp"

namespace sgldvr {

// Coupled stepsize/noise schedule eta_t = eta0/(t+offset)^nu,
// rho_t = rho0/(t+offset)^(nu/2). The offset keeps t=0 finite; it preserves
// the coupling identity rho_t = rho0 * sqrt(eta_t/eta0) exactly.
struct DecaySchedule {
  double eta0 = 1.0;
  double rho0 = 0.0;
  double nu = 1.0;
  long long index_offset = 1;

  void validate() const;
  double eta(long long t) const;
  double rho(long long t) const;
  std::pair<double, double> eval(long long t) const { return {eta(t), rho(t)}; }

  // Largest stepsize of the run; what the analysis formulas mean by eta_0.
  double eta_init() const { return eta(0); }
  double rho_init() const { return rho(0); }
  // rho_t^2 / eta_t, constant in t by the coupling identity.
  double temperature_ratio() const { return rho0 * rho0 / eta0; }
};

enum class SamplingMode { with_replacement, without_replacement };
enum class Variant { sgd, sgld, sgld_vr };

std::string to_string(SamplingMode mode);
std::string to_string(Variant variant);
SamplingMode sampling_mode_from_string(const std::string& s);
Variant variant_from_string(const std::string& s);

struct SgldVrConfig {
  std::size_t batch_size = 1;    // B_b
  std::size_t epoch_length = 1;  // B_e
  long long horizon = 0;         // T, multiple of B_e
  DecaySchedule schedule;
  SamplingMode sampling = SamplingMode::with_replacement;

  void validate(std::size_t n_components) const;
};

// One trajectory's mutable state. Noise and batch draws for step t come from
// a stream derived from (stream_key, t), so prefixes are horizon-independent.
struct SgldVrState {
  Vec x;
  Vec snapshot;       // x-tilde
  Vec snapshot_grad;  // w-tilde = full_gradient(snapshot), always
  long long t = 0;
  long long epoch = 0;
  std::uint64_t stream_key = 0;
};

SgldVrState make_state(const FiniteSumObjective& obj, std::span<const double> x0,
                       std::uint64_t stream_key);

// (1/B_b) sum_{i in batch} (grad f_i(x_t) - grad f_i(x_tilde) + w_tilde);
// unbiased for the full gradient under uniform sampling.
Vec svrg_estimator(const FiniteSumObjective& obj, const SgldVrState& state,
                   std::span<const std::size_t> batch);

// One SGLD-VR step: snapshot refresh at epoch boundaries, then the update
// x <- x - eta_t * estimator + rho_t * noise.
void step(const FiniteSumObjective& obj, const SgldVrConfig& config,
          SgldVrState& state);

struct RunOptions {
  long long record_stride = 1;
  bool record_iterates = false;
  std::string objective_id;
};

// Executes horizon steps from x0 and records f / ||grad f|| (exact, computed
// out of band) every record_stride steps plus both endpoints.
RunTrace run(const FiniteSumObjective& obj, const SgldVrConfig& config,
             std::span<const double> x0, std::uint64_t seed,
             const RunOptions& options = {});

// Same loop with the plain minibatch-mean estimator; sgd forces rho_t = 0,
// sgld uses the schedule's rho_t.
RunTrace run_baseline(const FiniteSumObjective& obj, const SgldVrConfig& config,
                      std::span<const double> x0, std::uint64_t seed,
                      Variant variant, const RunOptions& options = {});

// Key of the per-step stream family a run with this seed uses.
std::uint64_t trajectory_stream_key(std::uint64_t seed);

// Replays the Gaussian draws of step t without touching the iterate. Used by
// diagnostics that need the exact noise sequence a finished run consumed.
Vec replay_step_noise(const FiniteSumObjective& obj, const SgldVrConfig& config,
                      std::uint64_t stream_key, long long t);

nlohmann::json schedule_to_json(const DecaySchedule& schedule);
nlohmann::json config_to_json(const SgldVrConfig& config);

}  // namespace sgldvr

#endif
