#include "sgldvr/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sgldvr/errors.hpp"
#include "sgldvr/rng.hpp"

namespace sgldvr::theory {

LyapunovSequences weight_sequences(std::span<const double> eta,
                                   std::span<const double> beta, double L,
                                   std::size_t epoch_length) {
  if (epoch_length == 0) throw ConfigError("weight_sequences: epoch length >= 1");
  if (eta.size() != epoch_length || beta.size() != epoch_length)
    throw ConfigError("weight_sequences: eta/beta must have epoch_length entries");
  if (L < 0.0) throw ConfigError("weight_sequences: L must be nonnegative");

  const double be = static_cast<double>(epoch_length);
  LyapunovSequences seq;
  seq.c.assign(epoch_length + 1, 0.0);
  seq.gamma.assign(epoch_length, 0.0);
  seq.beta.assign(beta.begin(), beta.end());

  for (std::size_t t = epoch_length; t-- > 0;) {
    const double e = eta[t];
    seq.c[t] = seq.c[t + 1] * (1.0 + beta[t] * e + 2.0 * e * e * L * L / be) +
               e * e * L * L * L / be;
  }
  for (std::size_t t = 0; t < epoch_length; ++t) {
    const double e = eta[t];
    seq.gamma[t] = e - (seq.c[t + 1] / beta[t]) * e - e * e * L -
                   2.0 * seq.c[t + 1] * e * e;
  }
  seq.gamma_min = *std::min_element(seq.gamma.begin(), seq.gamma.end());
  return seq;
}

LyapunovSequences weight_sequences(std::span<const double> eta, double beta_tilde,
                                   double L, std::size_t epoch_length) {
  std::vector<double> beta(epoch_length, beta_tilde);
  return weight_sequences(eta, beta, L, epoch_length);
}

double constant_eta_c0(double eta0, double beta_tilde, double L,
                       std::size_t epoch_length) {
  if (epoch_length == 0) throw ConfigError("constant_eta_c0: epoch length >= 1");
  if (beta_tilde <= 0.0) throw ConfigError("constant_eta_c0: beta must be positive");
  const double be = static_cast<double>(epoch_length);
  if (L == 0.0) return 0.0;
  const double g = 1.0 + beta_tilde * eta0 + 2.0 * eta0 * eta0 * L * L / be;
  const double D = (eta0 * L * L * L / be) / (beta_tilde + 2.0 * eta0 * L * L / be);
  return (std::pow(g, static_cast<double>(epoch_length)) - 1.0) * D;
}

FeasibilityReport validate_hyperparams(double eta0, double beta_tilde, double L,
                                       std::size_t epoch_length) {
  if (eta0 <= 0.0 || beta_tilde <= 0.0 || L < 0.0 || epoch_length == 0)
    throw ConfigError("validate_hyperparams: eta0, beta > 0; L >= 0; B_e >= 1");

  // The recursion route; tests cross-check against the closed form.
  std::vector<double> eta(epoch_length, eta0);
  const auto seq = weight_sequences(eta, beta_tilde, L, epoch_length);

  FeasibilityReport report;
  report.c0_tilde = seq.c[0];
  report.lhs = seq.c[0] * (1.0 / beta_tilde + 2.0 * eta0) + eta0 * L;
  report.gamma_min = seq.gamma_min;
  report.feasible = report.lhs < 1.0 && report.gamma_min > 0.0;
  if (!report.feasible) {
    if (report.lhs >= 1.0)
      report.reason = "c0 (1/beta + 2 eta0) + eta0 L = " + format_double(report.lhs) +
                      " >= 1";
    else
      report.reason = "min gamma_t = " + format_double(report.gamma_min) + " <= 0";
  }
  return report;
}

double grad_norm_bound(double delta_f, double T, double gamma_min, double L,
                       double c0, std::size_t dim, double nu, double C0) {
  if (T < 1.0) throw ConfigError("grad_norm_bound: T >= 1 required");
  if (gamma_min <= 0.0)
    throw InfeasibleError("grad_norm_bound: infeasible hyperparameters (gamma <= 0)");
  const double d = static_cast<double>(dim);
  return delta_f / (T * gamma_min) +
         (d / gamma_min) * (L / 2.0 + c0) * C0 / std::pow(T, nu);
}

RunLyapunov run_lyapunov(const DecaySchedule& schedule, double beta_tilde, double L,
                         std::size_t epoch_length, long long horizon) {
  schedule.validate();
  const long long epochs =
      std::max<long long>(1, horizon / static_cast<long long>(epoch_length));
  RunLyapunov out;
  out.gamma_bar = std::numeric_limits<double>::infinity();
  std::vector<double> eta(epoch_length);
  for (long long s = 0; s < epochs; ++s) {
    for (std::size_t l = 0; l < epoch_length; ++l)
      eta[l] = schedule.eta(s * static_cast<long long>(epoch_length) +
                            static_cast<long long>(l));
    const auto seq = weight_sequences(eta, beta_tilde, L, epoch_length);
    out.gamma_bar = std::min(out.gamma_bar, seq.gamma_min);
    out.c0_max = std::max(out.c0_max, seq.c[0]);
  }
  return out;
}

std::vector<long long> stepsize_batch_partition(
    const std::function<double(long long)>& eta, double delta, long long t_max) {
  if (delta <= 0.0) throw ConfigError("stepsize_batch_partition: delta > 0 required");
  std::vector<long long> boundaries;
  long long t = 0;
  while (t <= t_max && eta(t) > delta) ++t;
  if (t > t_max) return boundaries;
  boundaries.push_back(t);  // n_0
  double acc = 0.0;
  for (long long s = t; s <= t_max; ++s) {
    acc += eta(s);
    if (acc >= delta) {
      if (s + 1 > t_max) break;
      boundaries.push_back(s + 1);
      acc = 0.0;
    }
  }
  return boundaries;
}

std::vector<long long> stepsize_batch_partition(const DecaySchedule& schedule,
                                                double delta, long long t_max) {
  schedule.validate();
  return stepsize_batch_partition(
      [&schedule](long long t) { return schedule.eta(t); }, delta, t_max);
}

std::vector<long long> stepsize_batch_partition(std::span<const double> eta,
                                                double delta) {
  if (eta.empty()) throw ConfigError("stepsize_batch_partition: empty schedule");
  return stepsize_batch_partition(
      [&eta](long long t) { return eta[static_cast<std::size_t>(t)]; }, delta,
      static_cast<long long>(eta.size()) - 1);
}

double RecurrenceConstants::expected_tau_bound(double j) const {
  if (alpha <= 0.0) return std::numeric_limits<double>::infinity();
  return 4.0 / alpha + K + j * (1.0 / (2.0 * alpha * delta) + 1.0);
}

RecurrenceConstants recurrence_constants(const ObjectiveMetadata& meta,
                                         const DecaySchedule& schedule,
                                         std::size_t epoch_length, std::size_t dim,
                                         double delta, double f_x0, double f_xn0) {
  if (delta <= 0.0) throw ConfigError("recurrence_constants: delta > 0 required");
  if (!meta.has_regularization() || *meta.reg_mu1 <= 0.0)
    throw ConfigError(
        "recurrence_constants: objective must declare mu1 > 0, psi1, mu2, psi2");
  schedule.validate();
  if (epoch_length == 0) throw ConfigError("recurrence_constants: B_e >= 1");

  const double L = meta.grad_lipschitz;
  const double mu1 = *meta.reg_mu1;
  const double mu2 = *meta.reg_mu2;
  const double psi1 = *meta.reg_psi1;
  const double psi2 = *meta.reg_psi2;
  const double be = static_cast<double>(epoch_length);
  const double d = static_cast<double>(dim);

  RecurrenceConstants rc;
  rc.delta = delta;
  rc.c_lo = schedule.eta_init() * (2.0 * L * L * L * mu2 / (mu1 * be) + L);
  if (rc.c_lo >= 1.0)
    throw InfeasibleError(
        "recurrence_constants: eta0 too large, no valid C1 exists (c_lo = " +
        format_double(rc.c_lo) + " >= 1)");
  rc.C1 = 0.5 * (rc.c_lo + 1.0);
  rc.alpha = 1.0 - 2.0 * std::exp(-(1.0 - rc.C1) * mu1 * delta);
  rc.alpha_positive = rc.alpha > 0.0;

  long long n0 = 0;
  while (schedule.eta(n0) > delta) ++n0;
  rc.n0 = n0;
  rc.eta_n0 = schedule.eta(n0);

  rc.B = 2.0 * (psi1 +
                (2.0 * rc.eta_n0 * L * L * L / be) * (mu2 * f_x0 + 2.0 * psi2) +
                schedule.temperature_ratio() * L * d / 2.0);
  rc.M = 2.0 * delta * rc.B;
  const double arg = f_xn0 / (delta * rc.B);
  rc.K = arg > 0.0 ? std::log(arg) / ((1.0 - rc.C1) * mu1 * delta)
                   : -std::numeric_limits<double>::infinity();
  return rc;
}

BrownianP1Parts brownian_p1_parts(double r, double rho0, double t_n,
                                  std::span<const double> z_star) {
  if (r < 0.0 || rho0 < 0.0)
    throw ConfigError("brownian_p1: r and rho0 must be nonnegative");
  if (z_star.empty()) throw ConfigError("brownian_p1: target must be nonempty");

  BrownianP1Parts parts;
  if (r == 0.0 || rho0 == 0.0) return parts;  // boundary values of the lemma
  if (t_n <= 0.0) throw ConfigError("brownian_p1: t_n > 0 required when rho0 > 0");

  const double d = static_cast<double>(z_star.size());
  double density = std::numeric_limits<double>::infinity();
  for (double z : z_star) {
    const double shifted = z + r / d;
    const double val = std::sqrt(2.0 / (std::numbers::pi * t_n)) *
                       std::exp(-(z * z + shifted * shifted) / (2.0 * t_n)) *
                       (r / d);
    density = std::min(density, val);
  }
  const double reach = norm(z_star) + r;
  const double base = 4.0 * reach / std::sqrt(2.0 * std::numbers::pi * d * t_n) *
                          std::exp(-reach * reach / (2.0 * d * t_n)) -
                      1.0;
  parts.density_factor = density;
  parts.reflection_base = base;
  const double raw = std::pow(density, d) * std::pow(std::max(0.0, base), d);
  parts.p1 = std::clamp(raw, 0.0, 1.0);
  return parts;
}

double brownian_p1(double r, double rho0, double t_n, std::span<const double> z_star) {
  return brownian_p1_parts(r, rho0, t_n, z_star).p1;
}

namespace {
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
}  // namespace

double brownian_p1_sharp(double r, double rho0, double t_n,
                         std::span<const double> z_star) {
  if (r <= 0.0 || rho0 <= 0.0) return 0.0;
  if (t_n <= 0.0) throw ConfigError("brownian_p1_sharp: t_n > 0 required");
  const double d = static_cast<double>(z_star.size());
  const double sd = std::sqrt(t_n);
  double box = 1.0;
  for (double z : z_star)
    box *= normal_cdf((z + r / d) / sd) - normal_cdf((z - r / d) / sd);
  const double a = (norm(z_star) + r) / std::sqrt(d * t_n);
  const double refl = std::max(0.0, 4.0 * normal_cdf(a) - 3.0);
  return std::clamp(box * std::pow(refl, d), 0.0, 1.0);
}

SaddleQuantities saddle_quantities(double eps, double L, double q, double delta,
                                   double eta0, std::size_t dim,
                                   std::size_t i_count) {
  if (eps <= 0.0 || L <= 0.0 || q <= 0.0)
    throw ConfigError("saddle_quantities: eps, L, q must be positive");
  if (delta <= 0.0 || eta0 <= 0.0)
    throw ConfigError("saddle_quantities: delta and eta0 must be positive");

  SaddleQuantities sq;
  sq.epsilon = eps;
  sq.zeta = 5.0 * eps * eps / (2.0 * L);
  sq.radius = std::max(eps / L, std::sqrt(3.0 / (L * q)) * eps);
  sq.Q = (sq.zeta + L * sq.radius * sq.radius) / (L + q);
  if (sq.radius * sq.radius <= sq.Q)
    throw InfeasibleError("saddle_quantities: inconsistent constants, r^2 <= Q");

  sq.escape_times.resize(i_count);
  const double half_step = std::exp(delta / 2.0) - 1.0;
  for (std::size_t i = 0; i < i_count; ++i)
    sq.escape_times[i] =
        2.0 * std::sqrt(eta0 * std::exp(static_cast<double>(i) * delta)) * half_step;

  if (dim >= 3) {
    const double power = (static_cast<double>(dim) - 1.0) / 2.0;
    const double gamma_term = std::tgamma((static_cast<double>(dim) - 2.0) / 2.0);
    const double spread = sq.radius * sq.radius - sq.Q;
    std::vector<double> probs(i_count);
    for (std::size_t i = 0; i < i_count; ++i)
      probs[i] = std::min(
          1.0, std::pow(sq.escape_times[i], -power) * std::pow(spread, power) /
                   gamma_term);
    sq.constrained_probs = std::move(probs);
  }
  return sq;
}

double escape_time_sum(const DecaySchedule& schedule, long long n_i, long long n_ip1) {
  double sum = 0.0;
  for (long long l = n_i; l < n_ip1; ++l) sum += std::sqrt(schedule.eta(l));
  return sum;
}

namespace {

double spread_around_mean(std::span<const Vec> values) {
  const std::size_t n = values.size();
  const std::size_t d = values.front().size();
  Vec mean(d, 0.0);
  for (const Vec& v : values) {
    if (v.size() != d) throw ConfigError("subset_variance: ragged input");
    axpy(1.0, v, mean);
  }
  scale(mean, 1.0 / static_cast<double>(n));
  double spread = 0.0;
  for (const Vec& v : values) spread += norm_sq(sub(v, mean));
  return spread / static_cast<double>(n);
}

void check_subset_args(std::size_t n, std::size_t b) {
  if (n < 2) throw ConfigError("subset_variance: need at least two elements");
  if (b == 0 || b > n) throw ConfigError("subset_variance: need 1 <= b <= N");
}

double binomial(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 0; i < k; ++i)
    c *= static_cast<double>(n - i) / static_cast<double>(i + 1);
  return c;
}

}  // namespace

double subset_variance(std::span<const Vec> values, std::size_t b) {
  check_subset_args(values.size(), b);
  const double n = static_cast<double>(values.size());
  const double bb = static_cast<double>(b);
  return (n - bb) / ((n - 1.0) * bb) * spread_around_mean(values);
}

double subset_variance(std::span<const double> scalars, std::size_t b) {
  std::vector<Vec> values(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) values[i] = Vec{scalars[i]};
  return subset_variance(std::span<const Vec>(values), b);
}

double subset_variance_oracle(std::span<const Vec> values, std::size_t b) {
  check_subset_args(values.size(), b);
  const std::size_t n = values.size();
  if (binomial(n, b) > 1e6)
    throw InfeasibleError("subset_variance_oracle: C(N,b) exceeds the 10^6 limit");

  const std::size_t d = values.front().size();
  Vec mean(d, 0.0);
  for (const Vec& v : values) axpy(1.0, v, mean);
  scale(mean, 1.0 / static_cast<double>(n));

  std::vector<std::size_t> idx(b);
  for (std::size_t i = 0; i < b; ++i) idx[i] = i;
  double total = 0.0;
  std::size_t count = 0;
  Vec sub_mean(d);
  while (true) {
    sub_mean.assign(d, 0.0);
    for (std::size_t i : idx) axpy(1.0, values[i], sub_mean);
    scale(sub_mean, 1.0 / static_cast<double>(b));
    total += norm_sq(sub(sub_mean, mean));
    ++count;

    // next combination in lexicographic order
    std::size_t k = b;
    while (k > 0 && idx[k - 1] == n - b + (k - 1)) --k;
    if (k == 0) break;
    ++idx[k - 1];
    for (std::size_t j = k; j < b; ++j) idx[j] = idx[j - 1] + 1;
  }
  return total / static_cast<double>(count);
}

double subset_variance_oracle(std::span<const double> scalars, std::size_t b) {
  std::vector<Vec> values(scalars.size());
  for (std::size_t i = 0; i < scalars.size(); ++i) values[i] = Vec{scalars[i]};
  return subset_variance_oracle(std::span<const Vec>(values), b);
}

double drift_bound_check(const DriftCheckParams& params, std::uint64_t seed) {
  if (params.n_trials < 100)
    throw ConfigError("drift_bound_check: too few trials (need >= 100)");
  if (params.c2 <= 0.0 || params.nu_sum <= 0.0 || params.dim == 0 ||
      params.n_terms == 0)
    throw ConfigError("drift_bound_check: c2, nu_sum, dim, n_terms must be positive");

  const double threshold = 4.0 * params.nu_sum * std::sqrt(params.c2);
  std::size_t successes = 0;
  std::vector<double> weights(params.n_terms);
  Vec y(params.dim), xi(params.dim);
  for (std::size_t trial = 0; trial < params.n_trials; ++trial) {
    RandomStream rng(derive_key(seed, trial));
    if (params.zero_weights) {
      std::fill(weights.begin(), weights.end(), 0.0);
    } else {
      double sum = 0.0;
      for (double& w : weights) {
        w = rng.uniform01();
        sum += w;
      }
      for (double& w : weights) w *= 2.0 * params.nu_sum / sum;
    }
    y.assign(params.dim, 0.0);
    for (double w : weights) {
      if (params.zero_noise) continue;
      rng.normal_vector(xi);
      axpy(w, xi, y);
    }
    if (norm(y) <= threshold) ++successes;
  }
  return static_cast<double>(successes) / static_cast<double>(params.n_trials);
}

double ergodicity_horizon(const ObjectiveMetadata& meta, const DecaySchedule& schedule,
                          std::size_t epoch_length, double eps_tilde, double p_fail,
                          std::span<const double> s, double f_x0) {
  if (!meta.has_regularization() || *meta.reg_mu1 <= 0.0)
    throw ConfigError("ergodicity_horizon: objective must declare mu1 > 0 etc.");
  if (eps_tilde <= 0.0 || p_fail <= 0.0)
    throw ConfigError("ergodicity_horizon: eps_tilde and p_fail must be positive");
  if (f_x0 <= 0.0) throw ConfigError("ergodicity_horizon: f(x0) must be positive");
  if (s.empty()) throw ConfigError("ergodicity_horizon: target must be nonempty");
  schedule.validate();

  const double d = static_cast<double>(s.size());
  const double L = meta.grad_lipschitz;
  const double c =
      (4.0 / std::sqrt(2.0 * std::numbers::pi) - 1.0) * std::exp(-0.5);
  const double numer =
      1.0 + std::log(f_x0) +
      std::pow(d * norm(s) + eps_tilde, d) /
          (eps_tilde * std::pow(c * eps_tilde, d));
  const double denom =
      eps_tilde * p_fail * (*meta.reg_mu1) *
      (*meta.reg_psi1 +
       2.0 * schedule.eta_init() * L * L * L *
           (*meta.reg_mu2 * f_x0 + 2.0 * *meta.reg_psi2) /
           static_cast<double>(epoch_length) +
       schedule.temperature_ratio() * L * d);
  if (denom <= 0.0)
    throw InfeasibleError("ergodicity_horizon: degenerate denominator");
  return numer / denom;
}

}  // namespace sgldvr::theory
