#include "sgldvr/campaigns.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "sgldvr/errors.hpp"
#include "sgldvr/rng.hpp"
#include "sgldvr/theory.hpp"

namespace sgldvr {

namespace {

void parallel_for(std::size_t count, unsigned jobs,
                  const std::function<void(std::size_t)>& body) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned n_threads = std::min<unsigned>(jobs, static_cast<unsigned>(count));
  pool.reserve(n_threads);
  for (unsigned j = 0; j < n_threads; ++j) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  return (m % 2 == 1) ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
}

double mean(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

std::string join_csv(std::initializer_list<std::string> fields) {
  std::string row;
  bool first = true;
  for (const auto& f : fields) {
    if (!first) row += ',';
    row += f;
    first = false;
  }
  return row;
}

std::string fd(double v) { return format_double(v); }
std::string fi(long long v) { return std::to_string(v); }

}  // namespace

Assertion check_le(const std::string& metric, double value, double threshold) {
  Assertion a;
  a.metric = metric;
  a.comparator = "<=";
  a.threshold = threshold;
  a.value = value;
  a.margin = threshold - value;
  a.pass = value <= threshold;
  return a;
}

Assertion check_ge(const std::string& metric, double value, double threshold) {
  Assertion a;
  a.metric = metric;
  a.comparator = ">=";
  a.threshold = threshold;
  a.value = value;
  a.margin = value - threshold;
  a.pass = value >= threshold;
  return a;
}

Assertion check_eq(const std::string& metric, double value, double threshold) {
  Assertion a;
  a.metric = metric;
  a.comparator = "==";
  a.threshold = threshold;
  a.value = value;
  a.margin = -std::abs(value - threshold);
  a.pass = value == threshold;
  return a;
}

void CampaignResult::add(Assertion a) {
  pass = pass && a.pass;
  assertions.push_back(std::move(a));
}

void write_campaign_outputs(const CampaignResult& result, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto csv_path = std::filesystem::path(out_dir) / (result.name + ".csv");
  std::ofstream csv(csv_path);
  if (!csv) throw ConfigError("cannot write campaign csv: " + csv_path.string());
  csv << result.csv_header << '\n';
  for (const auto& row : result.csv_rows) csv << row << '\n';
  csv.close();

  nlohmann::json verdict;
  verdict["name"] = result.name;
  verdict["master_seed"] = result.master_seed;
  verdict["pass"] = result.pass;
  nlohmann::json asserts = nlohmann::json::array();
  for (const auto& a : result.assertions)
    asserts.push_back({{"metric", a.metric},
                       {"comparator", a.comparator},
                       {"threshold", a.threshold},
                       {"value", a.value},
                       {"margin", a.margin},
                       {"pass", a.pass}});
  verdict["assertions"] = asserts;
  verdict["constants"] = result.constants;
  verdict["extra"] = result.extra;

  const auto json_path = std::filesystem::path(out_dir) / (result.name + ".verdict.json");
  std::ofstream out(json_path);
  if (!out) throw ConfigError("cannot write campaign verdict: " + json_path.string());
  out << verdict.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// variance

CampaignResult variance_reduction_campaign(const VarianceCampaignParams& params,
                                           std::uint64_t master_seed) {
  const auto bundle = make_quadratic(params.dim, params.scale);
  const auto& obj = *bundle.objective;
  const double L = bundle.meta.grad_lipschitz;
  const std::size_t d = params.dim;
  const std::size_t n = obj.component_count();

  struct ProbeResult {
    double grad_sq = 0.0, dist_sq = 0.0, rhs = 0.0;
    double mc_mean = 0.0, se = 0.0, bound_margin = 0.0;
    double bias_margin = 0.0;  // min over coords of 4 se_c - |bias_c|
    double var_ratio = 0.0;    // plain-SGD variance / SVRG variance
  };
  std::vector<ProbeResult> probes(params.n_probes);

  parallel_for(params.n_probes, params.jobs, [&](std::size_t p) {
    RandomStream stream(derive_key(master_seed, p));
    Vec x(d), snapshot(d);
    for (std::size_t j = 0; j < d; ++j)
      x[j] = params.probe_halfwidth * (2.0 * stream.uniform01() - 1.0);
    for (std::size_t j = 0; j < d; ++j)
      snapshot[j] = params.probe_halfwidth * (2.0 * stream.uniform01() - 1.0);

    Vec grad_x = obj.full_gradient(x);
    Vec w_tilde = obj.full_gradient(snapshot);

    const double nmc = static_cast<double>(params.mc_batches);
    Vec est(d), g(d);
    Vec coord_sum(d, 0.0), coord_sumsq(d, 0.0);
    double sq_sum = 0.0, sq_sumsq = 0.0;
    double svrg_var_sum = 0.0, plain_var_sum = 0.0;
    std::vector<std::size_t> batch(params.batch_size);
    for (std::size_t m = 0; m < params.mc_batches; ++m) {
      stream.sample_with_replacement(n, params.batch_size, batch);
      est.assign(d, 0.0);
      double plain_dev_sq = 0.0;
      Vec plain(d, 0.0);
      for (std::size_t i : batch) {
        obj.component_gradient(i, x, g);
        axpy(1.0, g, est);
        axpy(1.0, g, plain);
        obj.component_gradient(i, snapshot, g);
        axpy(-1.0, g, est);
        axpy(1.0, w_tilde, est);
      }
      const double inv_b = 1.0 / static_cast<double>(params.batch_size);
      scale(est, inv_b);
      scale(plain, inv_b);

      const double sq = norm_sq(est);
      sq_sum += sq;
      sq_sumsq += sq * sq;
      for (std::size_t j = 0; j < d; ++j) {
        coord_sum[j] += est[j];
        coord_sumsq[j] += est[j] * est[j];
      }
      svrg_var_sum += norm_sq(sub(est, grad_x));
      plain_dev_sq = norm_sq(sub(plain, grad_x));
      plain_var_sum += plain_dev_sq;
    }

    ProbeResult& pr = probes[p];
    pr.grad_sq = norm_sq(grad_x);
    pr.dist_sq = norm_sq(sub(x, snapshot));
    pr.rhs = 2.0 * pr.grad_sq +
             2.0 * L * L / static_cast<double>(params.epoch_length) * pr.dist_sq;
    pr.mc_mean = sq_sum / nmc;
    const double var_sq = std::max(0.0, sq_sumsq / nmc - pr.mc_mean * pr.mc_mean);
    pr.se = std::sqrt(var_sq / nmc);
    pr.bound_margin = pr.rhs + params.slack_se * pr.se - pr.mc_mean;

    double bias_margin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d; ++j) {
      const double mean_c = coord_sum[j] / nmc;
      const double var_c = std::max(0.0, coord_sumsq[j] / nmc - mean_c * mean_c);
      const double se_c = std::sqrt(var_c / nmc);
      bias_margin = std::min(
          bias_margin, params.slack_se * se_c - std::abs(mean_c - grad_x[j]));
    }
    pr.bias_margin = bias_margin;
    pr.var_ratio = svrg_var_sum > 0.0 ? plain_var_sum / svrg_var_sum
                                      : std::numeric_limits<double>::infinity();
  });

  CampaignResult result;
  result.name = "variance";
  result.master_seed = master_seed;
  result.csv_header =
      "probe,grad_norm_sq,dist_sq,mc_second_moment,bound_rhs,se,bound_margin,"
      "bias_margin,plain_over_svrg_variance";
  double min_bound_margin = std::numeric_limits<double>::infinity();
  double min_bias_margin = std::numeric_limits<double>::infinity();
  std::vector<double> ratios;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const auto& pr = probes[p];
    min_bound_margin = std::min(min_bound_margin, pr.bound_margin);
    min_bias_margin = std::min(min_bias_margin, pr.bias_margin);
    ratios.push_back(pr.var_ratio);
    result.csv_rows.push_back(join_csv(
        {fi(static_cast<long long>(p)), fd(pr.grad_sq), fd(pr.dist_sq),
         fd(pr.mc_mean), fd(pr.rhs), fd(pr.se), fd(pr.bound_margin),
         fd(pr.bias_margin), fd(pr.var_ratio)}));
  }

  result.add(check_ge("min_second_moment_bound_margin", min_bound_margin, 0.0));
  result.add(check_ge("min_estimator_bias_margin", min_bias_margin, 0.0));
  result.constants = {{"L", L},
                      {"epoch_length", params.epoch_length},
                      {"bound", "2||grad f||^2 + 2 (L^2/B_e) ||x - x_tilde||^2"},
                      {"mc_batches", params.mc_batches},
                      {"slack_se", params.slack_se}};
  result.extra = {{"median_plain_over_svrg_variance", median(ratios)},
                  {"objective", bundle.id}};
  return result;
}

// ---------------------------------------------------------------------------
// first-order

CampaignResult first_order_campaign(const FirstOrderCampaignParams& params,
                                    std::uint64_t master_seed) {
  if (params.horizons.empty()) throw ConfigError("first-order: need horizons");
  const auto bundle = make_quadratic(params.dim, params.scale);
  const auto& obj = *bundle.objective;

  SgldVrConfig config;
  config.batch_size = params.batch_size;
  config.epoch_length = params.epoch_length;
  config.schedule = params.schedule;
  long long t_max = *std::max_element(params.horizons.begin(), params.horizons.end());
  const auto epoch = static_cast<long long>(params.epoch_length);
  config.horizon = ((t_max + epoch - 1) / epoch) * epoch;

  const std::size_t n_h = params.horizons.size();
  struct TrialResult {
    std::vector<double> min_sq;
    long long tau_fsp = -1;  // -1 = censored at the horizon
    double f0 = 0.0;
  };
  std::vector<TrialResult> trials(params.n_trials);

  parallel_for(params.n_trials, params.jobs, [&](std::size_t trial) {
    const std::uint64_t seed = derive_key(master_seed, trial);
    RandomStream init(derive_key(seed, 0xA11CE));
    Vec x0(params.dim);
    for (double& v : x0) v = params.x0_scale * init.normal();

    RunOptions options;
    options.record_stride = 1;
    options.objective_id = bundle.id;
    const RunTrace trace = run(obj, config, x0, seed, options);

    TrialResult& tr = trials[trial];
    tr.f0 = trace.records.front().f;
    tr.min_sq.assign(n_h, std::numeric_limits<double>::infinity());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& rec : trace.records) {
      best = std::min(best, rec.grad_norm * rec.grad_norm);
      for (std::size_t h = 0; h < n_h; ++h)
        if (rec.t == params.horizons[h]) tr.min_sq[h] = best;
      if (tr.tau_fsp < 0 && rec.grad_norm <= params.eps) tr.tau_fsp = rec.t;
    }
  });

  std::vector<double> mean_min_sq(n_h, 0.0);
  for (const auto& tr : trials)
    for (std::size_t h = 0; h < n_h; ++h) mean_min_sq[h] += tr.min_sq[h];
  for (double& v : mean_min_sq) v /= static_cast<double>(params.n_trials);

  double monotone_margin = std::numeric_limits<double>::infinity();
  for (std::size_t h = 1; h < n_h; ++h)
    monotone_margin = std::min(monotone_margin, mean_min_sq[h - 1] - mean_min_sq[h]);

  // least-squares fit of y = C / T
  double num = 0.0, den = 0.0;
  for (std::size_t h = 0; h < n_h; ++h) {
    const double inv_t = 1.0 / static_cast<double>(params.horizons[h]);
    num += mean_min_sq[h] * inv_t;
    den += inv_t * inv_t;
  }
  const double C_fit = num / den;
  const double y_bar = mean(mean_min_sq);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t h = 0; h < n_h; ++h) {
    const double fitted = C_fit / static_cast<double>(params.horizons[h]);
    ss_res += (mean_min_sq[h] - fitted) * (mean_min_sq[h] - fitted);
    ss_tot += (mean_min_sq[h] - y_bar) * (mean_min_sq[h] - y_bar);
  }
  const double r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);

  // predicted decay curve from the gradient-norm bound
  const double L = bundle.meta.grad_lipschitz;
  const auto lyap = theory::run_lyapunov(params.schedule, params.beta_tilde, L,
                                         params.epoch_length, config.horizon);
  std::vector<double> f0s;
  for (const auto& tr : trials) f0s.push_back(tr.f0);
  const double delta_f = mean(f0s) - bundle.meta.known_min_value.value_or(0.0);

  nlohmann::json survival = nlohmann::json::array();
  for (std::size_t h = 0; h < n_h; ++h) {
    std::size_t exceed = 0;
    for (const auto& tr : trials)
      if (tr.tau_fsp < 0 || tr.tau_fsp > params.horizons[h]) ++exceed;
    nlohmann::json entry;
    entry["horizon"] = params.horizons[h];
    entry["empirical_survival"] =
        static_cast<double>(exceed) / static_cast<double>(params.n_trials);
    if (lyap.gamma_bar > 0.0) {
      const double bound = theory::grad_norm_bound(
          delta_f, static_cast<double>(params.horizons[h]), lyap.gamma_bar, L,
          lyap.c0_max, params.dim, params.schedule.nu, params.C0);
      entry["predicted_survival_bound"] = std::sqrt(bound) / params.eps;
    }
    survival.push_back(entry);
  }

  CampaignResult result;
  result.name = "first-order";
  result.master_seed = master_seed;
  result.csv_header = "trial,f0,tau_fsp";
  for (long long h : params.horizons) result.csv_header += ",min_grad_sq_T" + fi(h);
  for (std::size_t trial = 0; trial < trials.size(); ++trial) {
    std::string row = join_csv({fi(static_cast<long long>(trial)),
                                fd(trials[trial].f0), fi(trials[trial].tau_fsp)});
    for (double v : trials[trial].min_sq) row += "," + fd(v);
    result.csv_rows.push_back(row);
  }

  result.add(check_ge("mean_min_grad_sq_monotone_decrease_margin", monotone_margin, 0.0));
  result.add(check_ge("c_over_t_fit_r2", r2, params.r2_threshold));
  result.constants = {{"L", L},
                      {"gamma_bar", lyap.gamma_bar},
                      {"c0_max", lyap.c0_max},
                      {"delta_f_mean", delta_f},
                      {"C0", params.C0},
                      {"fit_C", C_fit}};
  result.extra = {{"mean_min_grad_sq", mean_min_sq},
                  {"horizons", params.horizons},
                  {"survival", survival},
                  {"objective", bundle.id},
                  {"eps", params.eps}};
  return result;
}

// ---------------------------------------------------------------------------
// recurrence

DecaySchedule RecurrenceCampaignParams::schedule() const {
  DecaySchedule s;
  s.index_offset = index_offset;
  s.nu = nu;
  s.eta0 = eta_at0 * std::pow(static_cast<double>(index_offset), nu);
  s.rho0 = rho_at0 * std::pow(static_cast<double>(index_offset), 0.5 * nu);
  return s;
}

CampaignResult recurrence_campaign(const RecurrenceCampaignParams& params,
                                   std::uint64_t master_seed) {
  const auto bundle = make_quadratic(params.dim, params.scale);
  const auto& obj = *bundle.objective;
  const DecaySchedule schedule = params.schedule();

  SgldVrConfig config;
  config.batch_size = params.batch_size;
  config.epoch_length = params.epoch_length;
  config.horizon = params.horizon;
  config.schedule = schedule;

  const double f_x0 = params.scale * params.x0_norm * params.x0_norm;
  const auto rc = theory::recurrence_constants(bundle.meta, schedule,
                                               params.epoch_length, params.dim,
                                               params.delta, f_x0, f_x0);
  if (!rc.alpha_positive)
    throw ConfigError("recurrence campaign: delta too small, alpha = " +
                      format_double(rc.alpha) + " <= 0");

  const auto boundaries =
      theory::stepsize_batch_partition(schedule, params.delta, params.horizon);
  if (boundaries.size() < params.j_max + 4)
    throw ConfigError("recurrence campaign: horizon holds too few stepsize batches");

  struct TrialResult {
    std::vector<long long> tau;  // -1 = censored
    std::size_t visits = 0;
  };
  std::vector<TrialResult> trials(params.n_trials);

  parallel_for(params.n_trials, params.jobs, [&](std::size_t trial) {
    const std::uint64_t seed = derive_key(master_seed, trial);
    RandomStream init(derive_key(seed, 0xA11CE));
    Vec x0(params.dim);
    for (double& v : x0) v = init.normal();
    const double len = norm(x0);
    for (double& v : x0) v *= params.x0_norm / len;

    RunOptions options;
    options.record_stride = 1;
    options.objective_id = bundle.id;
    const RunTrace trace = run(obj, config, x0, seed, options);

    TrialResult& tr = trials[trial];
    tr.tau.assign(params.j_max, -1);
    double prev_tau = rc.K;
    for (std::size_t j = 0; j < params.j_max; ++j) {
      const auto start = static_cast<long long>(std::ceil(prev_tau + 1.0 - 1e-12));
      long long found = -1;
      for (long long t = std::max<long long>(start, 0);
           t < static_cast<long long>(boundaries.size()); ++t) {
        const auto step_index = static_cast<std::size_t>(boundaries[t]);
        if (trace.records[step_index].f <= rc.M) {
          found = t;
          break;
        }
      }
      if (found < 0) break;
      tr.tau[j] = found;
      ++tr.visits;
      prev_tau = static_cast<double>(found);
    }
  });

  std::size_t min_visits = params.j_max;
  std::vector<double> mean_tau(params.j_max, 0.0);
  bool any_censored = false;
  for (const auto& tr : trials) {
    min_visits = std::min(min_visits, tr.visits);
    for (std::size_t j = 0; j < params.j_max; ++j) {
      if (tr.tau[j] < 0) any_censored = true;
      else mean_tau[j] += static_cast<double>(tr.tau[j]);
    }
  }
  for (double& v : mean_tau) v /= static_cast<double>(params.n_trials);

  // least-squares slope of mean tau_j against j = 1..j_max
  double slope = 0.0;
  {
    const double jm = static_cast<double>(params.j_max);
    const double j_bar = (jm + 1.0) / 2.0;
    const double tau_bar = mean(mean_tau);
    double cov = 0.0, var = 0.0;
    for (std::size_t j = 0; j < params.j_max; ++j) {
      const double jj = static_cast<double>(j + 1);
      cov += (jj - j_bar) * (mean_tau[j] - tau_bar);
      var += (jj - j_bar) * (jj - j_bar);
    }
    slope = cov / var;
  }
  double monotone_margin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j < params.j_max; ++j)
    monotone_margin = std::min(monotone_margin, mean_tau[j] - mean_tau[j - 1]);

  const double slope_bound =
      (1.0 / (2.0 * rc.alpha * params.delta) + 1.0) * params.slope_slack;

  CampaignResult result;
  result.name = "recurrence";
  result.master_seed = master_seed;
  result.csv_header = "trial,visits";
  for (std::size_t j = 1; j <= params.j_max; ++j)
    result.csv_header += ",tau_" + std::to_string(j);
  for (std::size_t trial = 0; trial < trials.size(); ++trial) {
    std::string row = join_csv({fi(static_cast<long long>(trial)),
                                fi(static_cast<long long>(trials[trial].visits))});
    for (long long tau : trials[trial].tau) row += "," + fi(tau);
    result.csv_rows.push_back(row);
  }

  result.add(check_ge("min_visits", static_cast<double>(min_visits),
                      static_cast<double>(params.j_max)));
  result.add(check_ge("mean_tau_nondecreasing_margin",
                      any_censored ? -1.0 : monotone_margin, 0.0));
  result.add(check_le("mean_tau_slope", any_censored ? slope_bound + 1.0 : slope,
                      slope_bound));

  nlohmann::json tau_bounds = nlohmann::json::array();
  for (std::size_t j = 1; j <= params.j_max; ++j)
    tau_bounds.push_back(rc.expected_tau_bound(static_cast<double>(j)));
  result.constants = {{"delta", rc.delta},
                      {"c_lo", rc.c_lo},
                      {"C1", rc.C1},
                      {"alpha", rc.alpha},
                      {"B", rc.B},
                      {"K", rc.K},
                      {"level_M", rc.M},
                      {"n0", rc.n0},
                      {"eta_n0", rc.eta_n0},
                      {"expected_tau_bounds", tau_bounds},
                      {"slope_bound", slope_bound}};
  result.extra = {{"mean_tau", mean_tau},
                  {"n_batches_in_horizon", boundaries.size()},
                  {"f_x0", f_x0},
                  {"objective", bundle.id}};
  return result;
}

// ---------------------------------------------------------------------------
// reachability

namespace {

std::vector<WalkSetting> default_walk_settings() {
  return {
      {{0.0}, 1.0, 1.0, 0.5},        // the vacuity regression setting
      {{0.5}, 0.5, 1.0, 0.5},
      {{0.3}, 0.6, 0.5, 0.3},
      {{1.0}, 0.5, 2.0, 1.0},
      {{0.0}, 0.4, 0.25, 0.2},
      {{0.0, 0.0}, 1.0, 0.5, 0.5},
      {{0.5, 0.5}, 0.8, 1.0, 0.5},
      {{0.3, -0.2}, 0.7, 0.5, 0.4},
      {{1.0, 0.0}, 0.6, 1.5, 0.7},
      {{0.2, 0.2}, 0.5, 0.3, 0.3},
  };
}

}  // namespace

CampaignResult reachability_campaign(const ReachabilityCampaignParams& params,
                                     std::uint64_t master_seed) {
  const auto settings =
      params.settings.empty() ? default_walk_settings() : params.settings;
  for (const auto& s : settings)
    if (s.z_star.empty() || s.z_star.size() > 3)
      throw ConfigError("reachability: walk dimension must be 1..3 at desk scale");

  struct SettingResult {
    double freq = 0.0, se = 0.0, p1 = 0.0, p1_sharp = 0.0, margin = 0.0;
    bool vacuous = false;
  };
  std::vector<SettingResult> walk_results(settings.size());

  parallel_for(settings.size(), params.jobs, [&](std::size_t idx) {
    const WalkSetting& setting = settings[idx];
    const std::size_t d = setting.z_star.size();
    const std::uint64_t key = derive_key(master_seed, idx);

    // weights a_i scaled so rho0^2 sum a_i = t_n exactly
    RandomStream weight_stream(derive_key(key, 0xAAAA));
    std::vector<double> a(params.n_steps);
    double sum = 0.0;
    for (double& w : a) {
      w = weight_stream.uniform01();
      sum += w;
    }
    const double target = setting.t_n / (setting.rho0 * setting.rho0);
    for (double& w : a) w *= target / sum;

    const double bound_radius = norm(setting.z_star) + setting.r;
    std::size_t hits = 0;
    Vec z(d), eps_vec(d);
    for (std::size_t w = 0; w < params.n_walks; ++w) {
      RandomStream stream(derive_key(key, w));
      z.assign(d, 0.0);
      bool inside = true;
      for (std::size_t k = 0; k < params.n_steps; ++k) {
        stream.normal_vector(eps_vec);
        axpy(setting.rho0 * std::sqrt(a[k]), eps_vec, z);
        if (norm(z) > bound_radius) {
          inside = false;
          break;
        }
      }
      if (inside && dist(z, setting.z_star) <= setting.r) ++hits;
    }

    SettingResult& sr = walk_results[idx];
    sr.freq = static_cast<double>(hits) / static_cast<double>(params.n_walks);
    sr.se = std::sqrt(std::max(sr.freq * (1.0 - sr.freq),
                               1.0 / static_cast<double>(params.n_walks)) /
                      static_cast<double>(params.n_walks));
    sr.p1 = theory::brownian_p1(setting.r, setting.rho0, setting.t_n, setting.z_star);
    sr.p1_sharp =
        theory::brownian_p1_sharp(setting.r, setting.rho0, setting.t_n, setting.z_star);
    sr.vacuous = sr.p1 == 0.0;
    sr.margin = sr.freq - (sr.p1 - 3.0 * sr.se);
  });

  // part (b): the full dynamics reaches a ball around the target
  const auto bundle = make_quadratic(params.dim_b, params.scale_b);
  const auto& obj = *bundle.objective;
  if (params.target_b.size() != params.dim_b)
    throw ConfigError("reachability: target dimension mismatch");
  const double f_x0_nominal = 1.0;
  const double horizon_raw = theory::ergodicity_horizon(
      bundle.meta, params.schedule_b, params.epoch_length_b, params.eps_tilde,
      params.p_fail, params.target_b, f_x0_nominal);
  const auto epoch = static_cast<long long>(params.epoch_length_b);
  long long horizon = std::min<long long>(
      params.horizon_cap, static_cast<long long>(std::ceil(horizon_raw)));
  horizon = std::max<long long>(epoch, ((horizon + epoch - 1) / epoch) * epoch);

  SgldVrConfig config;
  config.batch_size = params.batch_size_b;
  config.epoch_length = params.epoch_length_b;
  config.horizon = horizon;
  config.schedule = params.schedule_b;

  std::vector<int> hit_flags(params.n_trials_b, 0);
  parallel_for(params.n_trials_b, params.jobs, [&](std::size_t trial) {
    const std::uint64_t seed = derive_key(master_seed, 0xB000 + trial);
    RandomStream init(derive_key(seed, 0xA11CE));
    Vec x0(params.dim_b);
    for (double& v : x0) v = init.normal();

    RunOptions options;
    options.record_stride = 1;
    options.record_iterates = true;
    options.objective_id = bundle.id;
    const RunTrace trace = run(obj, config, x0, seed, options);
    for (const auto& rec : trace.records) {
      if (rec.x && dist(*rec.x, params.target_b) <= params.eps_tilde) {
        hit_flags[trial] = 1;
        break;
      }
    }
  });
  const double hit_fraction =
      mean(std::vector<double>(hit_flags.begin(), hit_flags.end()));

  CampaignResult result;
  result.name = "reachability";
  result.master_seed = master_seed;
  result.csv_header = "setting,dim,r,t_n,rho0,frequency,se,p1,p1_sharp,margin,vacuous";
  double min_margin = std::numeric_limits<double>::infinity();
  std::size_t vacuous_count = 0;
  for (std::size_t idx = 0; idx < settings.size(); ++idx) {
    const auto& sr = walk_results[idx];
    min_margin = std::min(min_margin, sr.margin);
    if (sr.vacuous) ++vacuous_count;
    result.csv_rows.push_back(join_csv(
        {fi(static_cast<long long>(idx)),
         fi(static_cast<long long>(settings[idx].z_star.size())),
         fd(settings[idx].r), fd(settings[idx].t_n), fd(settings[idx].rho0),
         fd(sr.freq), fd(sr.se), fd(sr.p1), fd(sr.p1_sharp), fd(sr.margin),
         sr.vacuous ? "1" : "0"}));
  }

  result.add(check_ge("min_walk_bound_margin", min_margin, 0.0));
  result.add(check_ge("dynamics_hit_fraction", hit_fraction, 0.5));
  result.constants = {{"n_walks", params.n_walks},
                      {"n_steps", params.n_steps},
                      {"eps_tilde", params.eps_tilde},
                      {"p_fail", params.p_fail},
                      {"ergodicity_horizon_raw", horizon_raw},
                      {"horizon_used", horizon}};
  result.extra = {{"vacuous_settings", vacuous_count},
                  {"n_settings", settings.size()},
                  {"hit_fraction", hit_fraction},
                  {"note",
                   "printed p1 is identically 0 after clamping; the sharp "
                   "variant is reported as a diagnostic"}};
  return result;
}

// ---------------------------------------------------------------------------
// saddle

CampaignResult saddle_escape_campaign(const SaddleCampaignParams& params,
                                      std::uint64_t master_seed) {
  const auto bundle = make_saddle_quadratic(params.dim, params.neg_eig, params.pos_eig);
  const auto& obj = *bundle.objective;
  if (!bundle.meta.strict_saddle_q)
    throw ConfigError("saddle campaign: objective lacks a strict-saddle constant");

  const double L = bundle.meta.grad_lipschitz;
  const double q = *bundle.meta.strict_saddle_q;
  const auto quantities = theory::saddle_quantities(
      params.eps, L, q, params.delta, params.schedule.eta_init(), params.dim, 8);
  const double f_fsp = obj.full_value(bundle.meta.known_fsp_list.front().first);
  const double escape_level = f_fsp - quantities.zeta;

  SgldVrConfig noisy;
  noisy.batch_size = params.batch_size;
  noisy.epoch_length = params.epoch_length;
  noisy.horizon = params.horizon;
  noisy.schedule = params.schedule;
  SgldVrConfig quiet = noisy;
  quiet.schedule.rho0 = 0.0;
  SgldVrConfig full_batch = quiet;
  full_batch.batch_size = obj.component_count();

  const auto boundaries =
      theory::stepsize_batch_partition(params.schedule, params.delta, params.horizon);

  struct TrialResult {
    long long escape_noisy = -1;
    long long escape_quiet = -1;
    long long escape_gd = -1;
    double delta1_sq = std::numeric_limits<double>::quiet_NaN();
    double x0_tail = 0.0;
  };
  std::vector<TrialResult> trials(params.n_trials);

  parallel_for(params.n_trials, params.jobs, [&](std::size_t trial) {
    const std::uint64_t seed = derive_key(master_seed, trial);
    RandomStream init(derive_key(seed, 0xA11CE));
    Vec x0(params.dim, 0.0);  // exactly on the stable manifold: x_1 = 0
    for (std::size_t j = 1; j < params.dim; ++j) x0[j] = params.x0_sd * init.normal();

    RunOptions options;
    options.record_stride = 1;
    options.objective_id = bundle.id;

    auto escape_time = [&](const RunTrace& trace) -> long long {
      for (const auto& rec : trace.records)
        if (rec.f <= escape_level) return rec.t;
      return -1;
    };

    TrialResult& tr = trials[trial];
    tr.x0_tail = x0.back();
    const RunTrace noisy_trace = run(obj, noisy, x0, seed, options);
    tr.escape_noisy = escape_time(noisy_trace);
    tr.escape_quiet = escape_time(run(obj, quiet, x0, seed, options));
    tr.escape_gd = escape_time(run_baseline(obj, full_batch, x0, seed, Variant::sgd, options));

    if (tr.escape_noisy >= 0 && !boundaries.empty()) {
      // locate the stepsize batch containing the escape and accumulate the
      // noise the run actually consumed there
      std::size_t i = 0;
      while (i + 1 < boundaries.size() && boundaries[i + 1] <= tr.escape_noisy) ++i;
      const long long begin = boundaries[i];
      const long long end =
          (i + 1 < boundaries.size()) ? boundaries[i + 1] : params.horizon;
      double delta1 = 0.0;
      const std::uint64_t stream_key = trajectory_stream_key(seed);
      for (long long l = begin; l < end; ++l) {
        const Vec noise = replay_step_noise(obj, noisy, stream_key, l);
        delta1 += std::sqrt(params.schedule.eta(l)) * noise[0];
      }
      tr.delta1_sq = delta1 * delta1;
    }
  });

  std::size_t noisy_escapes = 0, quiet_escapes = 0, gd_escapes = 0;
  std::size_t projection_hits = 0;
  std::vector<double> escape_times;
  for (const auto& tr : trials) {
    if (tr.escape_noisy >= 0) {
      ++noisy_escapes;
      escape_times.push_back(static_cast<double>(tr.escape_noisy));
      if (tr.delta1_sq >= quantities.Q) ++projection_hits;
    }
    if (tr.escape_quiet >= 0) ++quiet_escapes;
    if (tr.escape_gd >= 0) ++gd_escapes;
  }
  const double n_trials_d = static_cast<double>(params.n_trials);
  const double noisy_fraction = noisy_escapes / n_trials_d;
  const double quiet_fraction = quiet_escapes / n_trials_d;
  const double projection_fraction =
      noisy_escapes > 0 ? static_cast<double>(projection_hits) /
                              static_cast<double>(noisy_escapes)
                        : 0.0;

  CampaignResult result;
  result.name = "saddle";
  result.master_seed = master_seed;
  result.csv_header =
      "trial,x0_last,escape_t_noisy,escape_t_noiseless,escape_t_gd,delta1_sq,Q";
  for (std::size_t trial = 0; trial < trials.size(); ++trial) {
    const auto& tr = trials[trial];
    result.csv_rows.push_back(join_csv(
        {fi(static_cast<long long>(trial)), fd(tr.x0_tail), fi(tr.escape_noisy),
         fi(tr.escape_quiet), fi(tr.escape_gd), fd(tr.delta1_sq), fd(quantities.Q)}));
  }

  result.add(check_eq("noiseless_escape_fraction", quiet_fraction, 0.0));
  result.add(check_ge("noisy_escape_fraction", noisy_fraction,
                      params.escape_fraction_threshold));
  result.add(check_ge("first_escape_projection_fraction", projection_fraction, 0.5));
  result.constants = {{"zeta", quantities.zeta},
                      {"radius", quantities.radius},
                      {"Q", quantities.Q},
                      {"escape_times_Ti", quantities.escape_times},
                      {"escape_level", escape_level},
                      {"L", L},
                      {"q", q},
                      {"delta", params.delta}};
  result.extra = {{"gd_escape_fraction", gd_escapes / n_trials_d},
                  {"median_escape_time",
                   escape_times.empty() ? -1.0 : median(escape_times)},
                  {"objective", bundle.id}};
  return result;
}

// ---------------------------------------------------------------------------
// classification

CampaignResult classification_benchmark(const ClassificationCampaignParams& params,
                                        std::uint64_t master_seed) {
  ClassifierOptions options;
  options.hidden_widths = params.widths;
  options.init_scale = params.init_scale;
  options.lipschitz_pairs = 0;  // constants are not needed for the ordering claim
  const auto bundle = make_binary_classifier(params.n_samples, params.data_seed, options);
  const auto& net = *bundle.objective;
  const std::size_t dim = net.dimension();

  auto make_config = [&](double eta0, double rho0) {
    SgldVrConfig config;
    config.batch_size = params.batch_size;
    config.epoch_length = params.epoch_length;
    config.horizon = params.horizon;
    config.schedule = DecaySchedule{eta0, rho0, params.nu, 1};
    return config;
  };

  auto draw_init = [&](std::uint64_t seed) {
    RandomStream init(derive_key(seed, 0xA11CE));
    Vec x0(dim);
    for (double& v : x0) v = params.init_scale * init.normal();
    return x0;
  };

  // stepsize grid, largest first-epoch-stable entry wins
  double chosen_eta0 = params.eta_grid.front();
  nlohmann::json grid_report = nlohmann::json::array();
  {
    const std::uint64_t probe_seed = derive_key(master_seed, 0xBEEF);
    const Vec x0 = draw_init(probe_seed);
    const double f0 = net.full_value(x0);
    bool any_stable = false;
    for (double eta0 : params.eta_grid) {
      SgldVrConfig probe = make_config(eta0, params.rho0);
      probe.horizon = static_cast<long long>(params.epoch_length);
      bool stable = true;
      double f_end = std::numeric_limits<double>::quiet_NaN();
      try {
        const RunTrace trace = run(net, probe, x0, probe_seed,
                                   {static_cast<long long>(params.epoch_length),
                                    false, bundle.id});
        f_end = trace.records.back().f;
        stable = f_end <= f0;
      } catch (const DivergenceError&) {
        stable = false;
      }
      grid_report.push_back({{"eta0", eta0}, {"stable", stable}, {"f_end", f_end}});
      if (stable && (!any_stable || eta0 > chosen_eta0)) {
        chosen_eta0 = eta0;
        any_stable = true;
      }
      if (!any_stable) chosen_eta0 = params.eta_grid.front();
    }
  }

  struct MethodRun {
    long long iters_to_target = -1;  // -1 = censored
    double final_train = 1.0;
    double final_test = 1.0;
    double initial_train = 1.0;
  };
  struct SeedResult {
    MethodRun sgd, sgld, vr;
  };
  std::vector<SeedResult> seeds(params.n_seeds);

  const std::vector<Variant> variants{Variant::sgd, Variant::sgld, Variant::sgld_vr};
  parallel_for(params.n_seeds, params.jobs, [&](std::size_t s) {
    const std::uint64_t seed = derive_key(master_seed, s + 1);
    const Vec x0 = draw_init(seed);

    for (Variant variant : variants) {
      SgldVrConfig config = make_config(chosen_eta0, params.rho0);
      RunOptions run_options;
      run_options.record_stride = static_cast<long long>(params.epoch_length);
      run_options.record_iterates = true;
      run_options.objective_id = bundle.id;

      MethodRun method;
      try {
        const RunTrace trace =
            variant == Variant::sgld_vr
                ? run(net, config, x0, seed, run_options)
                : run_baseline(net, config, x0, seed, variant, run_options);
        for (const auto& rec : trace.records) {
          if (!rec.x) continue;
          const double train_err = net.misclassification_rate(*rec.x, Split::train);
          if (rec.t == 0) method.initial_train = train_err;
          if (method.iters_to_target < 0 && train_err <= params.target_train_error)
            method.iters_to_target = rec.t;
          if (rec.t == trace.records.back().t) {
            method.final_train = train_err;
            method.final_test = net.misclassification_rate(*rec.x, Split::test);
          }
        }
      } catch (const DivergenceError&) {
        // censored with worst-case errors; stability selection makes this rare
      }
      if (variant == Variant::sgd) seeds[s].sgd = method;
      else if (variant == Variant::sgld) seeds[s].sgld = method;
      else seeds[s].vr = method;
    }
  });

  const auto censored_as = [&](long long iters) {
    return iters < 0 ? static_cast<double>(params.horizon + 1) : static_cast<double>(iters);
  };
  std::vector<double> iters_sgd, iters_sgld, iters_vr, test_sgd, test_vr;
  double init_mismatch = 0.0;
  for (const auto& sr : seeds) {
    iters_sgd.push_back(censored_as(sr.sgd.iters_to_target));
    iters_sgld.push_back(censored_as(sr.sgld.iters_to_target));
    iters_vr.push_back(censored_as(sr.vr.iters_to_target));
    test_sgd.push_back(sr.sgd.final_test);
    test_vr.push_back(sr.vr.final_test);
    init_mismatch = std::max(
        init_mismatch, std::max(std::abs(sr.sgd.initial_train - sr.sgld.initial_train),
                                std::abs(sr.sgd.initial_train - sr.vr.initial_train)));
  }

  CampaignResult result;
  result.name = "classify";
  result.master_seed = master_seed;
  result.csv_header =
      "seed,iters_sgd,iters_sgld,iters_sgldvr,test_sgd,test_sgld,test_sgldvr,"
      "train_sgd,train_sgld,train_sgldvr";
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    const auto& sr = seeds[s];
    result.csv_rows.push_back(join_csv(
        {fi(static_cast<long long>(s)), fi(sr.sgd.iters_to_target),
         fi(sr.sgld.iters_to_target), fi(sr.vr.iters_to_target),
         fd(sr.sgd.final_test), fd(sr.sgld.final_test), fd(sr.vr.final_test),
         fd(sr.sgd.final_train), fd(sr.sgld.final_train), fd(sr.vr.final_train)}));
  }

  result.add(check_eq("shared_init_error_mismatch", init_mismatch, 0.0));
  result.add(check_le("median_iters_to_target_vr_minus_sgld",
                      median(iters_vr) - median(iters_sgld), 0.0));
  result.add(check_le("median_final_test_vr_minus_sgd",
                      median(test_vr) - median(test_sgd), params.test_error_slack));
  result.constants = {{"chosen_eta0", chosen_eta0},
                      {"eta_grid", grid_report},
                      {"rho0", params.rho0},
                      {"batch_size", params.batch_size},
                      {"epoch_length", params.epoch_length},
                      {"horizon", params.horizon},
                      {"target_train_error", params.target_train_error}};
  result.extra = {{"median_iters_sgd", median(iters_sgd)},
                  {"median_iters_sgld", median(iters_sgld)},
                  {"median_iters_sgldvr", median(iters_vr)},
                  {"median_test_sgd", median(test_sgd)},
                  {"median_test_sgldvr", median(test_vr)},
                  {"objective", bundle.id}};
  return result;
}

// ---------------------------------------------------------------------------
// dispatch

namespace {

DecaySchedule schedule_override(const nlohmann::json& j, const DecaySchedule& base) {
  DecaySchedule s = base;
  s.eta0 = j.value("eta0", s.eta0);
  s.rho0 = j.value("rho0", s.rho0);
  s.nu = j.value("nu", s.nu);
  s.index_offset = j.value("index_offset", s.index_offset);
  s.validate();
  return s;
}

}  // namespace

const std::vector<std::string>& campaign_names() {
  static const std::vector<std::string> names{
      "variance", "first-order", "recurrence", "reachability", "saddle", "classify"};
  return names;
}

CampaignResult run_campaign(const std::string& name, const nlohmann::json& overrides,
                            std::uint64_t master_seed, unsigned jobs) {
  const auto& j = overrides;
  if (name == "variance") {
    VarianceCampaignParams p;
    p.dim = j.value("dim", p.dim);
    p.scale = j.value("scale", p.scale);
    p.n_probes = j.value("n_probes", p.n_probes);
    p.mc_batches = j.value("mc_batches", p.mc_batches);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.epoch_length = j.value("epoch_length", p.epoch_length);
    p.probe_halfwidth = j.value("probe_halfwidth", p.probe_halfwidth);
    p.slack_se = j.value("slack_se", p.slack_se);
    p.jobs = jobs;
    return variance_reduction_campaign(p, master_seed);
  }
  if (name == "first-order") {
    FirstOrderCampaignParams p;
    p.dim = j.value("dim", p.dim);
    p.scale = j.value("scale", p.scale);
    if (j.contains("schedule")) p.schedule = schedule_override(j.at("schedule"), p.schedule);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.epoch_length = j.value("epoch_length", p.epoch_length);
    p.horizons = j.value("horizons", p.horizons);
    p.n_trials = j.value("n_trials", p.n_trials);
    p.eps = j.value("eps", p.eps);
    p.x0_scale = j.value("x0_scale", p.x0_scale);
    p.r2_threshold = j.value("r2_threshold", p.r2_threshold);
    p.jobs = jobs;
    return first_order_campaign(p, master_seed);
  }
  if (name == "recurrence") {
    RecurrenceCampaignParams p;
    p.dim = j.value("dim", p.dim);
    p.scale = j.value("scale", p.scale);
    p.eta_at0 = j.value("eta_at0", p.eta_at0);
    p.rho_at0 = j.value("rho_at0", p.rho_at0);
    p.index_offset = j.value("index_offset", p.index_offset);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.epoch_length = j.value("epoch_length", p.epoch_length);
    p.horizon = j.value("horizon", p.horizon);
    p.delta = j.value("delta", p.delta);
    p.j_max = j.value("j_max", p.j_max);
    p.n_trials = j.value("n_trials", p.n_trials);
    p.x0_norm = j.value("x0_norm", p.x0_norm);
    p.jobs = jobs;
    return recurrence_campaign(p, master_seed);
  }
  if (name == "reachability") {
    ReachabilityCampaignParams p;
    p.n_walks = j.value("n_walks", p.n_walks);
    p.n_steps = j.value("n_steps", p.n_steps);
    p.n_trials_b = j.value("n_trials_b", p.n_trials_b);
    p.eps_tilde = j.value("eps_tilde", p.eps_tilde);
    p.p_fail = j.value("p_fail", p.p_fail);
    p.horizon_cap = j.value("horizon_cap", p.horizon_cap);
    if (j.contains("settings")) {
      p.settings.clear();
      for (const auto& s : j.at("settings")) {
        WalkSetting setting;
        setting.z_star = s.at("z_star").get<std::vector<double>>();
        setting.r = s.at("r").get<double>();
        setting.t_n = s.at("t_n").get<double>();
        setting.rho0 = s.at("rho0").get<double>();
        p.settings.push_back(std::move(setting));
      }
    }
    p.jobs = jobs;
    return reachability_campaign(p, master_seed);
  }
  if (name == "saddle") {
    SaddleCampaignParams p;
    p.dim = j.value("dim", p.dim);
    p.neg_eig = j.value("neg_eig", p.neg_eig);
    p.pos_eig = j.value("pos_eig", p.pos_eig);
    p.eps = j.value("eps", p.eps);
    p.delta = j.value("delta", p.delta);
    if (j.contains("schedule")) p.schedule = schedule_override(j.at("schedule"), p.schedule);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.epoch_length = j.value("epoch_length", p.epoch_length);
    p.horizon = j.value("horizon", p.horizon);
    p.n_trials = j.value("n_trials", p.n_trials);
    p.x0_sd = j.value("x0_sd", p.x0_sd);
    p.jobs = jobs;
    return saddle_escape_campaign(p, master_seed);
  }
  if (name == "classify") {
    ClassificationCampaignParams p;
    p.n_samples = j.value("n_samples", p.n_samples);
    if (j.contains("widths")) {
      const auto widths = j.at("widths");
      p.widths = {widths.at(0).get<std::size_t>(), widths.at(1).get<std::size_t>()};
    }
    p.data_seed = j.value("data_seed", p.data_seed);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.epoch_length = j.value("epoch_length", p.epoch_length);
    p.rho0 = j.value("rho0", p.rho0);
    p.eta_grid = j.value("eta_grid", p.eta_grid);
    p.horizon = j.value("horizon", p.horizon);
    p.n_seeds = j.value("n_seeds", p.n_seeds);
    p.target_train_error = j.value("target_train_error", p.target_train_error);
    p.init_scale = j.value("init_scale", p.init_scale);
    p.jobs = jobs;
    return classification_benchmark(p, master_seed);
  }
  throw ConfigError("unknown campaign: " + name +
                    " (expected variance | first-order | recurrence | "
                    "reachability | saddle | classify)");
}

}  // namespace sgldvr
