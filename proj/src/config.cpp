#include "sgldvr/config.hpp"

#include <fstream>

#include "sgldvr/errors.hpp"
#include "sgldvr/rng.hpp"
#include "sgldvr/theory.hpp"

namespace sgldvr {

namespace {

template <typename T>
T require(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing config key: " + key);
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for config key: " + key);
  }
}

}  // namespace

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad json in " + path + ": " + e.what());
  }
  return j;
}

NamedObjective make_objective(const nlohmann::json& spec) {
  const auto type = require<std::string>(spec, "type");
  NamedObjective named;
  if (type == "quadratic") {
    auto bundle = make_quadratic(require<std::size_t>(spec, "dim"),
                                 require<double>(spec, "scale"));
    named.objective = bundle.objective;
    named.meta = bundle.meta;
    named.id = bundle.id;
  } else if (type == "saddle") {
    auto bundle = make_saddle_quadratic(require<std::size_t>(spec, "dim"),
                                        require<double>(spec, "neg_eig"),
                                        require<double>(spec, "pos_eig"));
    named.objective = bundle.objective;
    named.meta = bundle.meta;
    named.id = bundle.id;
  } else if (type == "sigmoid_net") {
    Matrix A;
    if (spec.contains("matrix")) {
      const auto rows = spec.at("matrix");
      if (!rows.is_array() || rows.empty())
        throw ConfigError("sigmoid_net: matrix must be a nonempty array of rows");
      A = Matrix(rows.size(), rows.front().size());
      for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j)
          A(i, j) = rows.at(i).at(j).get<double>();
    } else {
      A = Matrix(require<std::size_t>(spec, "rows"), require<std::size_t>(spec, "dim"));
      RandomStream rng(derive_key(spec.value("matrix_seed", std::uint64_t{7}), 0xA));
      for (double& v : A.data) v = rng.normal();
    }
    auto bundle = make_sigmoid_net(A, require<double>(spec, "gamma"),
                                   spec.value("offset", 0.0));
    named.objective = bundle.objective;
    named.meta = bundle.meta;
    named.id = bundle.id;
  } else if (type == "binary_classifier") {
    ClassifierOptions options;
    if (spec.contains("widths")) {
      const auto widths = spec.at("widths");
      options.hidden_widths = {widths.at(0).get<std::size_t>(),
                               widths.at(1).get<std::size_t>()};
    }
    options.lipschitz_pairs = spec.value("lipschitz_pairs", std::size_t{10000});
    auto bundle = make_binary_classifier(require<std::size_t>(spec, "n_samples"),
                                         require<std::uint64_t>(spec, "data_seed"),
                                         options);
    named.objective = bundle.objective;
    named.classifier = bundle.objective;
    named.meta = bundle.meta;
    named.id = bundle.id;
  } else {
    throw ConfigError("unknown objective type: " + type);
  }
  return named;
}

DecaySchedule schedule_from_json(const nlohmann::json& j) {
  DecaySchedule schedule;
  schedule.eta0 = require<double>(j, "eta0");
  schedule.rho0 = j.value("rho0", 0.0);
  schedule.nu = j.value("nu", 1.0);
  schedule.index_offset = j.value("index_offset", 1LL);
  schedule.validate();
  return schedule;
}

SgldVrConfig config_from_json(const nlohmann::json& j) {
  SgldVrConfig config;
  config.batch_size = require<std::size_t>(j, "batch_size");
  config.epoch_length = require<std::size_t>(j, "epoch_length");
  config.horizon = require<long long>(j, "horizon");
  config.schedule = schedule_from_json(j.at("schedule"));
  config.sampling =
      sampling_mode_from_string(j.value("sampling", std::string("with_replacement")));
  return config;
}

Vec initial_point(const nlohmann::json& spec, std::size_t dim, std::uint64_t seed) {
  const auto type = spec.value("type", std::string("zeros"));
  if (type == "zeros") return Vec(dim, 0.0);
  if (type == "gaussian") {
    const double scale = spec.value("scale", 0.1);
    RandomStream rng(derive_key(seed, 0x1417));
    Vec x(dim);
    for (double& v : x) v = scale * rng.normal();
    return x;
  }
  if (type == "explicit") {
    const auto values = require<std::vector<double>>(spec, "values");
    if (values.size() != dim) throw ConfigError("explicit x0 has wrong dimension");
    return values;
  }
  throw ConfigError("unknown x0 type: " + type);
}

nlohmann::json metadata_to_json(const ObjectiveMetadata& meta) {
  nlohmann::json j;
  j["grad_lipschitz"] = meta.grad_lipschitz;
  j["lipschitz_is_empirical"] = meta.lipschitz_is_empirical;
  if (meta.hessian_lipschitz) j["hessian_lipschitz"] = *meta.hessian_lipschitz;
  if (meta.strict_saddle_q) j["strict_saddle_q"] = *meta.strict_saddle_q;
  if (meta.has_regularization()) {
    j["mu1"] = *meta.reg_mu1;
    j["psi1"] = *meta.reg_psi1;
    j["mu2"] = *meta.reg_mu2;
    j["psi2"] = *meta.reg_psi2;
    j["regularization_is_empirical"] = meta.regularization_is_empirical;
  }
  if (meta.known_min_value) j["known_min_value"] = *meta.known_min_value;
  if (!meta.known_fsp_list.empty()) {
    nlohmann::json fsps = nlohmann::json::array();
    for (const auto& [point, eig] : meta.known_fsp_list)
      fsps.push_back({{"point", point}, {"min_hessian_eigenvalue", eig}});
    j["known_fsp_list"] = fsps;
  }
  return j;
}

nlohmann::json theory_report(const nlohmann::json& request) {
  const auto named = make_objective(request.at("objective"));
  const auto schedule = schedule_from_json(request.at("schedule"));
  const auto epoch_length = request.value("epoch_length", std::size_t{10});
  const double beta_tilde = request.value("beta_tilde", 2.0);
  const double L = named.meta.grad_lipschitz;

  nlohmann::json report;
  report["objective"] = named.id;
  report["metadata"] = metadata_to_json(named.meta);
  report["schedule"] = schedule_to_json(schedule);
  report["epoch_length"] = epoch_length;
  report["beta_tilde"] = beta_tilde;

  const auto feasibility =
      theory::validate_hyperparams(schedule.eta_init(), beta_tilde, L, epoch_length);
  report["feasibility"] = {{"feasible", feasibility.feasible},
                           {"c0_tilde", feasibility.c0_tilde},
                           {"lhs", feasibility.lhs},
                           {"gamma_min", feasibility.gamma_min},
                           {"condition", "c0 (1/beta + 2 eta0) + eta0 L < 1"},
                           {"reason", feasibility.reason}};

  std::vector<double> eta(epoch_length);
  for (std::size_t l = 0; l < epoch_length; ++l)
    eta[l] = schedule.eta(static_cast<long long>(l));
  const auto seq = theory::weight_sequences(eta, beta_tilde, L, epoch_length);
  report["lyapunov"] = {{"c", seq.c}, {"gamma", seq.gamma}, {"gamma_min", seq.gamma_min}};

  if (request.contains("horizon")) {
    const auto horizon = request.at("horizon").get<long long>();
    const auto lyap =
        theory::run_lyapunov(schedule, beta_tilde, L, epoch_length, horizon);
    report["gamma_bar"] = lyap.gamma_bar;
    report["c0_max"] = lyap.c0_max;
    if (lyap.gamma_bar > 0.0 && request.contains("delta_f")) {
      report["grad_norm_bound"] = theory::grad_norm_bound(
          request.at("delta_f").get<double>(), static_cast<double>(horizon),
          lyap.gamma_bar, L, lyap.c0_max, request.value("dim", std::size_t{1}),
          schedule.nu, request.value("C0", 1.0));
    }
  }

  if (request.contains("delta") && named.meta.has_regularization()) {
    const double delta = request.at("delta").get<double>();
    double f_x0 = request.value("f_x0", 0.0);
    if (request.contains("x0")) {
      const auto x0 = request.at("x0").get<std::vector<double>>();
      f_x0 = named.objective->full_value(x0);
    }
    const double f_xn0 = request.value("f_xn0", f_x0);
    const auto rc = theory::recurrence_constants(
        named.meta, schedule, epoch_length, named.objective->dimension(), delta,
        f_x0, f_xn0);
    report["recurrence"] = {{"delta", rc.delta},
                            {"c_lo", rc.c_lo},
                            {"C1", rc.C1},
                            {"alpha", rc.alpha},
                            {"alpha_positive", rc.alpha_positive},
                            {"B", rc.B},
                            {"K", rc.K},
                            {"level_M", rc.M},
                            {"n0", rc.n0},
                            {"eta_n0", rc.eta_n0},
                            {"expected_tau_bound_j1", rc.expected_tau_bound(1.0)},
                            {"expected_tau_bound_j5", rc.expected_tau_bound(5.0)}};
  }

  if (request.contains("eps") && named.meta.strict_saddle_q) {
    const double eps = request.at("eps").get<double>();
    const double delta = request.value("delta", 0.5);
    const auto sq = theory::saddle_quantities(eps, L, *named.meta.strict_saddle_q,
                                              delta, schedule.eta_init(),
                                              named.objective->dimension(), 8);
    nlohmann::json saddle = {{"epsilon", sq.epsilon},
                             {"zeta", sq.zeta},
                             {"radius", sq.radius},
                             {"Q", sq.Q},
                             {"escape_times", sq.escape_times}};
    if (sq.constrained_probs)
      saddle["constrained_probs"] = *sq.constrained_probs;
    else
      saddle["constrained_probs"] = "not applicable for d <= 2";
    report["saddle"] = saddle;
  }

  if (request.contains("eps_tilde") && named.meta.has_regularization()) {
    const double eps_tilde = request.at("eps_tilde").get<double>();
    const double p_fail = request.value("p_fail", 0.5);
    Vec target(named.objective->dimension(), 0.0);
    if (request.contains("target"))
      target = request.at("target").get<std::vector<double>>();
    const double f_x0 = request.value("f_x0", 1.0);
    report["ergodicity_horizon"] = theory::ergodicity_horizon(
        named.meta, schedule, epoch_length, eps_tilde, p_fail, target, f_x0);
  }

  if (request.contains("brownian")) {
    const auto& b = request.at("brownian");
    const auto z_star = require<std::vector<double>>(b, "z_star");
    const double r = require<double>(b, "r");
    const double rho0 = require<double>(b, "rho0");
    const double t_n = require<double>(b, "t_n");
    const auto parts = theory::brownian_p1_parts(r, rho0, t_n, z_star);
    report["brownian_p1"] = {{"p1", parts.p1},
                             {"density_factor", parts.density_factor},
                             {"reflection_base", parts.reflection_base},
                             {"p1_sharp", theory::brownian_p1_sharp(r, rho0, t_n, z_star)}};
  }

  return report;
}

}  // namespace sgldvr
