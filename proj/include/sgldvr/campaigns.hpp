#ifndef SGLDVR_CAMPAIGNS_HPP
#define SGLDVR_CAMPAIGNS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgldvr/config.hpp"
#include "sgldvr/dynamics.hpp"

namespace sgldvr {

// A campaign assertion with its measured margin; campaigns never reduce to a
// bare boolean.
struct Assertion {
  std::string metric;
  std::string comparator;  // "<=", ">=", "=="
  double threshold = 0.0;
  double value = 0.0;
  double margin = 0.0;  // >= 0 iff pass
  bool pass = false;
};

Assertion check_le(const std::string& metric, double value, double threshold);
Assertion check_ge(const std::string& metric, double value, double threshold);
Assertion check_eq(const std::string& metric, double value, double threshold);

struct CampaignResult {
  std::string name;
  std::uint64_t master_seed = 0;
  bool pass = true;
  std::vector<Assertion> assertions;
  nlohmann::json constants;  // theory constants the campaign used
  nlohmann::json extra;      // campaign-specific report values
  std::string csv_header;
  std::vector<std::string> csv_rows;  // one row per trial / probe / setting

  void add(Assertion a);
};

// Writes <out_dir>/<name>.csv and <out_dir>/<name>.verdict.json; output bytes
// are a pure function of the result.
void write_campaign_outputs(const CampaignResult& result, const std::string& out_dir);

// ---------------------------------------------------------------------------

struct VarianceCampaignParams {
  std::size_t dim = 10;
  double scale = 0.5;
  std::size_t n_probes = 100;
  std::size_t mc_batches = 100000;
  std::size_t batch_size = 1;
  std::size_t epoch_length = 10;
  double probe_halfwidth = 1.0;
  double slack_se = 4.0;
  unsigned jobs = 1;
};

// Monte Carlo second-moment check of the variance-reduced estimator against
// 2||grad f||^2 + 2 (L^2/B_e) ||x - x_tilde||^2, plus estimator unbiasedness
// and the variance ratio against the plain minibatch estimator.
CampaignResult variance_reduction_campaign(const VarianceCampaignParams& params,
                                           std::uint64_t master_seed);

struct FirstOrderCampaignParams {
  std::size_t dim = 10;
  double scale = 0.5;
  DecaySchedule schedule{0.5, 0.005, 1.0, 2};
  std::size_t batch_size = 5;
  std::size_t epoch_length = 10;
  std::vector<long long> horizons{500, 1000, 2000};
  std::size_t n_trials = 20;
  double eps = 0.1;
  double x0_scale = 1.0;
  double beta_tilde = 2.0;
  double C0 = 1.0;
  double r2_threshold = 0.9;
  unsigned jobs = 1;
};

// Decay of the best-so-far squared gradient norm at nested horizons, its C/T
// fit, and first-passage survival against the predicted bound curve.
CampaignResult first_order_campaign(const FirstOrderCampaignParams& params,
                                    std::uint64_t master_seed);

struct RecurrenceCampaignParams {
  std::size_t dim = 2;
  double scale = 0.5;
  double eta_at0 = 0.15;   // plateau stepsize; eta0 = eta_at0 * offset^nu
  double rho_at0 = 0.05;
  long long index_offset = 100000;
  double nu = 1.0;
  std::size_t batch_size = 1;
  std::size_t epoch_length = 80;
  long long horizon = 4000;
  double delta = 2.0;
  std::size_t j_max = 5;
  std::size_t n_trials = 20;
  double x0_norm = 6.0;
  double slope_slack = 1.5;
  unsigned jobs = 1;

  DecaySchedule schedule() const;
};

// Visits of the sublevel set f <= 2 delta B at stepsize-batch endpoints and
// the affine bound on the stopping times tau_j.
CampaignResult recurrence_campaign(const RecurrenceCampaignParams& params,
                                   std::uint64_t master_seed);

struct WalkSetting {
  Vec z_star;
  double r = 0.5;
  double t_n = 1.0;
  double rho0 = 0.5;
};

struct ReachabilityCampaignParams {
  std::vector<WalkSetting> settings;  // empty selects the default ten
  std::size_t n_walks = 100000;
  std::size_t n_steps = 32;
  // part (b): full dynamics on the quadratic
  std::size_t dim_b = 2;
  double scale_b = 0.5;
  DecaySchedule schedule_b{0.3, 0.1, 1.0, 1};
  std::size_t batch_size_b = 1;
  std::size_t epoch_length_b = 10;
  double eps_tilde = 0.5;
  double p_fail = 0.05;
  Vec target_b{0.3, 0.0};
  std::size_t n_trials_b = 20;
  long long horizon_cap = 1000000;
  unsigned jobs = 1;
};

// (a) accumulated-noise walks against the Brownian lower bound p1 (clamped
// printed form; the sharp variant is reported as a diagnostic);
// (b) hits of an eps-ball around a target within the ergodicity horizon.
CampaignResult reachability_campaign(const ReachabilityCampaignParams& params,
                                     std::uint64_t master_seed);

struct SaddleCampaignParams {
  std::size_t dim = 2;
  double neg_eig = 1.0;
  double pos_eig = 1.0;
  double eps = 0.1;
  double delta = 0.5;
  DecaySchedule schedule{1.0, 0.01, 1.0, 1};  // rho0 is the noisy arm's
  std::size_t batch_size = 1;
  std::size_t epoch_length = 10;
  long long horizon = 10000;
  std::size_t n_trials = 50;
  double x0_sd = 0.5;
  double escape_fraction_threshold = 0.9;
  unsigned jobs = 1;
};

// Escape from the strict saddle: noiseless arm must stay trapped on the
// stable manifold, the noisy arm must reach f <= f_fsp - zeta, and the first
// escape batch's noise projection is compared against Q.
CampaignResult saddle_escape_campaign(const SaddleCampaignParams& params,
                                      std::uint64_t master_seed);

struct ClassificationCampaignParams {
  std::size_t n_samples = 1000;
  std::pair<std::size_t, std::size_t> widths{8, 8};
  std::uint64_t data_seed = 20240817;
  std::size_t batch_size = 100;
  std::size_t epoch_length = 10;
  double nu = 1.0;
  double rho0 = 0.01;
  std::vector<double> eta_grid{1.0, 10.0, 100.0, 1000.0};
  long long horizon = 3000;
  std::size_t n_seeds = 12;
  double target_train_error = 0.2;
  double init_scale = 0.1;
  double test_error_slack = 0.05;
  unsigned jobs = 1;
};

// Trains sgd / sgld / sgld-vr from shared initializations and compares
// iterations to the target train error and final test error.
CampaignResult classification_benchmark(const ClassificationCampaignParams& params,
                                        std::uint64_t master_seed);

// Dispatch by name ("variance", "first-order", "recurrence", "reachability",
// "saddle", "classify") with JSON overrides of the parameter fields.
CampaignResult run_campaign(const std::string& name, const nlohmann::json& overrides,
                            std::uint64_t master_seed, unsigned jobs);

const std::vector<std::string>& campaign_names();

}  // namespace sgldvr

#endif
