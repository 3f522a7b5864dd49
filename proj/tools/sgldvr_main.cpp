#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgldvr/campaigns.hpp"
#include "sgldvr/config.hpp"
#include "sgldvr/errors.hpp"
#include "sgldvr/theory.hpp"

namespace {

// Fixed default master seed; no subcommand ever reads the wall clock.
constexpr std::uint64_t kDefaultSeed = 0xC0FFEE;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = kDefaultSeed;
  std::string out_dir = "out";
  unsigned jobs = 1;
  long long stride = 1;
};

nlohmann::json config_or_empty(const GlobalArgs& args) {
  if (args.config_path.empty()) return nlohmann::json::object();
  return sgldvr::load_json_file(args.config_path);
}

int cmd_run(const GlobalArgs& args) {
  const auto cfg = config_or_empty(args);
  if (!cfg.contains("objective") || !cfg.contains("config"))
    throw sgldvr::ConfigError("run: config file needs 'objective' and 'config'");
  const auto named = sgldvr::make_objective(cfg.at("objective"));
  const auto config = sgldvr::config_from_json(cfg.at("config"));
  const auto variant = sgldvr::variant_from_string(
      cfg.value("variant", std::string("sgld-vr")));
  const auto x0 = sgldvr::initial_point(cfg.value("x0", nlohmann::json::object()),
                                        named.objective->dimension(), args.seed);

  sgldvr::RunOptions options;
  options.record_stride = args.stride;
  options.record_iterates = cfg.value("record_iterates", false);
  options.objective_id = named.id;

  const auto trace =
      variant == sgldvr::Variant::sgld_vr
          ? sgldvr::run(*named.objective, config, x0, args.seed, options)
          : sgldvr::run_baseline(*named.objective, config, x0, args.seed, variant,
                                 options);
  std::filesystem::create_directories(args.out_dir);
  const auto path = std::filesystem::path(args.out_dir) / "run.csv";
  sgldvr::write_trace(trace, path.string());

  const auto summary = sgldvr::summarize(trace);
  nlohmann::json report = {{"trace", path.string()},
                           {"records", trace.records.size()},
                           {"min_f", summary.min_f},
                           {"median_f", summary.median_f},
                           {"min_grad_norm", summary.min_grad_norm},
                           {"variant", sgldvr::to_string(variant)},
                           {"seed", args.seed}};
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_theory(const GlobalArgs& args) {
  const auto request = config_or_empty(args);
  if (!request.contains("objective") || !request.contains("schedule"))
    throw sgldvr::ConfigError("theory: config file needs 'objective' and 'schedule'");
  const auto report = sgldvr::theory_report(request);
  std::cout << report.dump(2) << '\n';
  if (!args.out_dir.empty()) {
    std::filesystem::create_directories(args.out_dir);
    const auto path = std::filesystem::path(args.out_dir) / "theory.json";
    std::ofstream out(path);
    out << report.dump(2) << '\n';
  }
  return 0;
}

int cmd_validate(const GlobalArgs& args, double eta0, double beta, double lipschitz,
                 std::size_t epoch_length) {
  const auto cfg = config_or_empty(args);
  eta0 = cfg.value("eta0", eta0);
  beta = cfg.value("beta_tilde", beta);
  lipschitz = cfg.value("L", lipschitz);
  epoch_length = cfg.value("epoch_length", epoch_length);

  const auto report =
      sgldvr::theory::validate_hyperparams(eta0, beta, lipschitz, epoch_length);
  nlohmann::json out = {{"eta0", eta0},
                        {"beta_tilde", beta},
                        {"L", lipschitz},
                        {"epoch_length", epoch_length},
                        {"feasible", report.feasible},
                        {"c0_tilde", report.c0_tilde},
                        {"lhs", report.lhs},
                        {"condition", "c0 (1/beta + 2 eta0) + eta0 L < 1"},
                        {"gamma_min", report.gamma_min}};
  if (!report.feasible) out["violated"] = report.reason;
  std::cout << out.dump(2) << '\n';
  return 0;  // validation itself succeeded either way
}

int cmd_campaign(const GlobalArgs& args, const std::string& name) {
  auto overrides = config_or_empty(args);
  std::uint64_t seed = args.seed;
  std::string campaign = name;
  if (overrides.contains("master_seed")) seed = overrides.at("master_seed");
  if (campaign.empty()) campaign = overrides.value("name", std::string{});
  if (campaign.empty())
    throw sgldvr::ConfigError("campaign: pass a name or put one in the config file");

  const auto result = sgldvr::run_campaign(campaign, overrides, seed, args.jobs);
  sgldvr::write_campaign_outputs(result, args.out_dir);

  for (const auto& a : result.assertions)
    std::cout << (a.pass ? "pass " : "FAIL ") << result.name << "." << a.metric
              << " = " << sgldvr::format_double(a.value) << " " << a.comparator
              << " " << sgldvr::format_double(a.threshold) << " (margin "
              << sgldvr::format_double(a.margin) << ")\n";
  std::cout << "verdict: " << (result.pass ? "pass" : "fail") << " -> "
            << args.out_dir << "/" << result.name << ".verdict.json\n";
  return result.pass ? 0 : 1;
}

int cmd_oracle(const GlobalArgs& args, std::vector<double> values, std::size_t b) {
  const auto cfg = config_or_empty(args);
  if (cfg.contains("values")) values = cfg.at("values").get<std::vector<double>>();
  if (cfg.contains("b")) b = cfg.at("b").get<std::size_t>();
  if (values.empty()) throw sgldvr::ConfigError("oracle: pass --values");
  if (b == 0) throw sgldvr::ConfigError("oracle: pass --b >= 1");

  const double brute = sgldvr::theory::subset_variance_oracle(
      std::span<const double>(values), b);
  const double formula =
      sgldvr::theory::subset_variance(std::span<const double>(values), b);
  nlohmann::json out = {{"N", values.size()},
                        {"b", b},
                        {"enumerated_variance", brute},
                        {"formula_variance", formula},
                        {"abs_diff", std::abs(brute - formula)}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SGLD with SVRG variance reduction: runs, theory constants, "
               "and Monte Carlo verification campaigns"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "JSON config file");
  app.add_option("--seed", args.seed, "master seed (default 0xC0FFEE)");
  app.add_option("--out", args.out_dir, "output directory");
  app.add_option("--jobs", args.jobs, "parallel trials");
  app.add_option("--stride", args.stride, "trace record stride");

  auto* run_cmd = app.add_subcommand("run", "single trajectory (sgd/sgld/sgld-vr)");
  auto* theory_cmd = app.add_subcommand("theory", "print derived constants as JSON");

  auto* validate_cmd =
      app.add_subcommand("validate", "hyperparameter feasibility check");
  double eta0 = 0.01, beta = 2.0, lipschitz = 1.0;
  std::size_t epoch_length = 10;
  validate_cmd->add_option("--eta0", eta0, "initial stepsize");
  validate_cmd->add_option("--beta", beta, "weight-sequence beta");
  validate_cmd->add_option("--lipschitz", lipschitz, "gradient Lipschitz constant");
  validate_cmd->add_option("--epoch-length", epoch_length, "epoch length B_e");

  auto* campaign_cmd = app.add_subcommand("campaign", "run a named campaign");
  std::string campaign_name;
  campaign_cmd->add_option("name", campaign_name,
                           "variance | first-order | recurrence | reachability | "
                           "saddle | classify");

  auto* oracle_cmd =
      app.add_subcommand("oracle", "subset-variance brute-force enumeration");
  std::vector<double> oracle_values;
  std::size_t oracle_b = 1;
  oracle_cmd->add_option("--values", oracle_values, "scalar dataset")->delimiter(',');
  oracle_cmd->add_option("--b", oracle_b, "subset size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(args);
    if (theory_cmd->parsed()) return cmd_theory(args);
    if (validate_cmd->parsed())
      return cmd_validate(args, eta0, beta, lipschitz, epoch_length);
    if (campaign_cmd->parsed()) return cmd_campaign(args, campaign_name);
    if (oracle_cmd->parsed()) return cmd_oracle(args, oracle_values, oracle_b);
  } catch (const sgldvr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const sgldvr::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
