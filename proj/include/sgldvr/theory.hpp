#ifndef SGLDVR_THEORY_HPP
#define SGLDVR_THEORY_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sgldvr/dynamics.hpp"
#include "sgldvr/objectives.hpp"
#include "sgldvr/vec.hpp"

// Closed-form calculators for the constants, sequences and bounds of the
// analysis. Pure functions; each is paired with an independent check (closed
// form vs recursion, exhaustive enumeration, Monte Carlo) in the test and
// experiment layers.
namespace sgldvr::theory {

// Weight sequence c_t = c_{t+1}(1 + beta_t eta_t + 2 eta_t^2 L^2 / B_e)
//                        + eta_t^2 L^3 / B_e, c_{B_e} = 0 (backward), and
// normalizers gamma_t = eta_t - (c_{t+1}/beta_t) eta_t - eta_t^2 L
//                        - 2 c_{t+1} eta_t^2.
struct LyapunovSequences {
  std::vector<double> c;      // length B_e + 1, c.back() == 0
  std::vector<double> gamma;  // length B_e
  std::vector<double> beta;   // length B_e
  double gamma_min = 0.0;
};

LyapunovSequences weight_sequences(std::span<const double> eta,
                                   std::span<const double> beta, double L,
                                   std::size_t epoch_length);
LyapunovSequences weight_sequences(std::span<const double> eta, double beta_tilde,
                                   double L, std::size_t epoch_length);

// Constant-(eta, beta) closed form c0 = (g^{B_e} - 1) D with
// g = 1 + beta eta0 + 2 eta0^2 L^2 / B_e and
// D = (eta0 L^3 / B_e) / (beta + 2 eta0 L^2 / B_e).
double constant_eta_c0(double eta0, double beta_tilde, double L,
                       std::size_t epoch_length);

struct FeasibilityReport {
  bool feasible = false;
  double c0_tilde = 0.0;
  double lhs = 0.0;       // c0 (1/beta + 2 eta0) + eta0 L, must be < 1
  double gamma_min = 0.0; // must be > 0
  std::string reason;     // empty when feasible
};

// The sufficient condition c0 (1/beta + 2 eta0) + eta0 L < 1 plus positivity
// of every gamma_t at constant (eta0, beta).
FeasibilityReport validate_hyperparams(double eta0, double beta_tilde, double L,
                                       std::size_t epoch_length);

// Delta_f/(T gamma_bar) + (d/gamma_bar)(L/2 + c0) C0 / T^nu.
double grad_norm_bound(double delta_f, double T, double gamma_min, double L,
                       double c0, std::size_t dim, double nu, double C0);

// min over all epochs of a run of gamma_min, and max of c_0, with the epoch's
// actual stepsizes; inputs to grad_norm_bound over a whole trajectory.
struct RunLyapunov {
  double gamma_bar = 0.0;
  double c0_max = 0.0;
};
RunLyapunov run_lyapunov(const DecaySchedule& schedule, double beta_tilde, double L,
                         std::size_t epoch_length, long long horizon);

// Stepsize batch boundaries: n_0 is the first index with eta_t <= delta and
// n_{k+1} the smallest s > n_k with sum_{i=n_k}^{s-1} eta_i >= delta, i.e.
// batches are the half-open index blocks [n_k, n_{k+1}) whose stepsize sums
// first reach delta. Stops once a batch cannot complete by t_max.
std::vector<long long> stepsize_batch_partition(
    const std::function<double(long long)>& eta, double delta, long long t_max);
std::vector<long long> stepsize_batch_partition(const DecaySchedule& schedule,
                                                double delta, long long t_max);
std::vector<long long> stepsize_batch_partition(std::span<const double> eta,
                                                double delta);

struct RecurrenceConstants {
  double delta = 0.0;
  double c_lo = 0.0;   // eta_init (2 L^3 mu2 / (mu1 B_e) + L), must be < 1
  double C1 = 0.0;     // midpoint of (c_lo, 1)
  double alpha = 0.0;  // 1 - 2 exp(-(1-C1) mu1 delta)
  double B = 0.0;
  double K = 0.0;
  double M = 0.0;  // level 2 delta B
  long long n0 = 0;
  double eta_n0 = 0.0;
  bool alpha_positive = false;  // false carries a delta-too-small warning

  // E[tau_j] <= 4/alpha + K + j (1/(2 alpha delta) + 1).
  double expected_tau_bound(double j) const;
};

// Requires mu1 > 0 and the four regularization constants in the metadata.
RecurrenceConstants recurrence_constants(const ObjectiveMetadata& meta,
                                         const DecaySchedule& schedule,
                                         std::size_t epoch_length, std::size_t dim,
                                         double delta, double f_x0, double f_xn0);

// The clamped product lower bound for the joint Brownian event
// {||z_n - z*|| <= r, ||z_k|| <= ||z*|| + r for all k}; identically 0 when
// r = 0 or rho0 = 0, and clamped into [0,1].
double brownian_p1(double r, double rho0, double t_n, std::span<const double> z_star);

struct BrownianP1Parts {
  double density_factor = 0.0;    // min-dim transition-density term, pre-power
  double reflection_base = 0.0;   // 4(||z*||+r)/sqrt(2 pi d t_n) e^{...} - 1, unclamped
  double p1 = 0.0;                // clamped product
};
BrownianP1Parts brownian_p1_parts(double r, double rho0, double t_n,
                                  std::span<const double> z_star);

// Diagnostic sharpening that keeps the exact Gaussian integrals instead of
// the final density*width weakening; still a lower bound for the same event.
double brownian_p1_sharp(double r, double rho0, double t_n,
                         std::span<const double> z_star);

struct SaddleQuantities {
  double epsilon = 0.0;
  double zeta = 0.0;    // 5 eps^2 / (2L)
  double radius = 0.0;  // max(eps/L, sqrt(3/(Lq)) eps)
  double Q = 0.0;       // (zeta + L r^2) / (L + q), always < r^2
  std::vector<double> escape_times;  // T_i = 2 sqrt(eta0 e^{i delta}) (e^{delta/2}-1)
  // min(1, T_i^{-(d-1)/2} (r^2-Q)^{(d-1)/2} / Gamma((d-2)/2)); absent for d <= 2
  // where the chi-like density derivation does not apply.
  std::optional<std::vector<double>> constrained_probs;
};

SaddleQuantities saddle_quantities(double eps, double L, double q, double delta,
                                   double eta0, std::size_t dim,
                                   std::size_t i_count);

// sum_{l=n_i}^{n_{i+1}-1} sqrt(eta_l), the direct-summation escape time for
// arbitrary nu.
double escape_time_sum(const DecaySchedule& schedule, long long n_i, long long n_ip1);

// (N-b)/((N-1) b) * (1/N) sum ||a_i - a_bar||^2, the without-replacement
// variance of a size-b subset mean.
double subset_variance(std::span<const Vec> values, std::size_t b);
double subset_variance(std::span<const double> scalars, std::size_t b);

// Exhaustive enumeration of all b-subsets; guards C(N,b) <= 10^6.
double subset_variance_oracle(std::span<const Vec> values, std::size_t b);
double subset_variance_oracle(std::span<const double> scalars, std::size_t b);

struct DriftCheckParams {
  std::size_t dim = 5;
  double c2 = 5.0;       // second-moment bound of the noise terms
  double nu_sum = 1.0;   // sum of weights a_j is at most 2 nu_sum
  std::size_t n_terms = 32;
  std::size_t n_trials = 10000;
  bool zero_noise = false;    // xi_j = 0
  bool zero_weights = false;  // a_j = 0
};

// Empirical Pr(||sum a_j xi_j|| <= 4 nu sqrt(C2)) with weights scaled to sum
// exactly 2 nu; the claim guarantees >= 1/2.
double drift_bound_check(const DriftCheckParams& params, std::uint64_t seed);

// The finite time horizon of the reachability theorem with unit hidden
// constant: [1 + ln f(x0) + (d||s|| + eps)^d / (eps (c eps)^d)] /
// [eps p mu1 (psi1 + 2 eta L^3 (mu2 f(x0) + 2 psi2)/B_e + (rho^2/eta) L d)]
// with c = (4/sqrt(2 pi) - 1) e^{-1/2}.
double ergodicity_horizon(const ObjectiveMetadata& meta, const DecaySchedule& schedule,
                          std::size_t epoch_length, double eps_tilde, double p_fail,
                          std::span<const double> s, double f_x0);

}  // namespace sgldvr::theory

#endif
