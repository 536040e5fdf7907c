// mfgsim: run scenarios, convergence studies and config validation.
//
// Exit codes: 0 success, 2 invalid configuration or usage, 3 numerical abort.

#include "macromfg/macromfg.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct ScenarioFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<double> dt;
  std::string variant;
};

void add_scenario_flags(CLI::App* cmd, ScenarioFlags& f) {
  cmd->add_option("--config", f.config_path, "Scenario JSON file (default: built-in preset)");
  cmd->add_option("--seed", f.seed, "Override the scenario seed");
  cmd->add_option("--paths", f.paths, "Override the number of Monte-Carlo paths");
  cmd->add_option("--dt", f.dt, "Override the time step (years)");
  cmd->add_option("--variant", f.variant,
                  "NoAggregateShock | AggregateShock | GeneralNGroup | BoundedRationality");
}

mfg::ScenarioConfig resolve(const ScenarioFlags& f) {
  mfg::ScenarioConfig config;
  if (!f.config_path.empty()) {
    config = mfg::load(f.config_path);
    if (!f.variant.empty()) config.variant = mfg::parse_variant(f.variant);
  } else {
    config = mfg::default_scenario(f.variant.empty() ? mfg::Variant::NoAggregateShock
                                                     : mfg::parse_variant(f.variant));
  }
  if (f.seed) config.seed = *f.seed;
  if (f.paths) config.n_paths = *f.paths;
  if (f.dt) config.dt = *f.dt;
  const auto report = mfg::validate(config);
  if (!report.ok()) {
    throw mfg::ConfigError(mfg::ConfigError::Kind::Validation, "invalid scenario: " + report.summary());
  }
  return config;
}

int cmd_validate(const ScenarioFlags& f) {
  mfg::ScenarioConfig config;
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw mfg::ConfigError(mfg::ConfigError::Kind::Io, "cannot open '" + f.config_path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    config = mfg::parse_config(buf.str());
  } else {
    config = mfg::default_scenario(f.variant.empty() ? mfg::Variant::NoAggregateShock
                                                     : mfg::parse_variant(f.variant));
  }
  const auto report = mfg::validate(config);
  if (report.ok()) {
    std::cout << "ok " << mfg::config_digest(config) << '\n';
    return 0;
  }
  for (const auto& v : report.violations) std::cout << "violation: " << v << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field macro-finance simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mfg::kVersion);

  ScenarioFlags run_flags;
  std::string run_out = "out";
  std::string scheme = "exact";
  bool finite_players = false, dump_agents = false, dump_noise = false, dump_policies = false;
  bool frozen_w = false;
  std::size_t order_paths = 4;
  auto* run = app.add_subcommand("run", "Simulate a scenario and write CSV outputs");
  add_scenario_flags(run, run_flags);
  run->add_option("--out", run_out, "Output directory");
  run->add_option("--scheme", scheme, "Price scheme: exact | em")
      ->check(CLI::IsMember({"exact", "em"}));
  run->add_flag("--finite-players", finite_players, "Also simulate the N-player economy");
  run->add_flag("--dump-agents", dump_agents, "Write per-agent paths of path 0 (implies --finite-players)");
  run->add_flag("--dump-noise", dump_noise, "Write path 0 increments to noise.bin");
  run->add_flag("--dump-policies", dump_policies, "Write relaxed policy densities");
  run->add_flag("--frozen-w", frozen_w, "Reuse path 0's common noise on every path");
  run->add_option("--order-paths", order_paths, "Paths for the in-run dt-halving check (0 skips)");

  ScenarioFlags study_flags;
  std::string study_out = "study";
  std::vector<std::size_t> ns = {64, 256, 1024};
  std::size_t chaos_paths = 64;
  auto* study = app.add_subcommand("study", "Convergence study in dt and N");
  add_scenario_flags(study, study_flags);
  study->add_option("--out", study_out, "Output directory");
  study->add_option("--n", ns, "Finite-player population sizes")->delimiter(',');
  study->add_option("--chaos-paths", chaos_paths, "Paths per population size");

  ScenarioFlags validate_flags;
  auto* val = app.add_subcommand("validate", "Check a scenario file and print violations");
  add_scenario_flags(val, validate_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*val) return cmd_validate(validate_flags);

    if (*run) {
      const auto config = resolve(run_flags);
      mfg::RunOptions opts;
      opts.scheme = scheme == "em" ? mfg::PriceScheme::EulerMaruyama : mfg::PriceScheme::ExactLognormal;
      opts.frozen_common = frozen_w;
      opts.finite_players = finite_players || dump_agents;
      opts.record_agents = dump_agents;
      opts.order_paths = order_paths;
      const auto result = mfg::run(config, opts);
      mfg::OutputOptions out{dump_agents, dump_noise, dump_policies};
      const auto files = mfg::write_outputs(result, run_out, out);
      std::cout << "wrote " << files.size() << " files to " << run_out << '\n';
      for (const auto& [name, value] : result.diagnostics) {
        std::cout << "  " << name << " = " << mfg::format_double(value) << '\n';
      }
      return 0;
    }

    if (*study) {
      const auto config = resolve(study_flags);
      const std::vector<double> dts = {config.dt, config.dt / 2, config.dt / 4};
      const auto r = mfg::convergence_study(config, dts, ns, config.n_paths, chaos_paths);
      std::filesystem::create_directories(study_out);
      mfg::Matrix dt_table(static_cast<Eigen::Index>(dts.size()), 4);
      for (std::size_t i = 0; i < dts.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        dt_table(row, 0) = dts[i];
        dt_table(row, 1) = r.dt.gaps[i];
        dt_table(row, 2) = r.price_rmse[i];
        dt_table(row, 3) = r.adjoint_gap[i];
      }
      mfg::write_csv((std::filesystem::path(study_out) / "study_dt.csv").string(), dt_table,
                     mfg::CsvSchema{"study_dt", 1, {"dt", "meanfield_gap", "price_rmse", "adjoint_gap"},
                                    {"years", "capital", "price", "-"}});
      mfg::Matrix n_table(static_cast<Eigen::Index>(ns.size()), 2);
      for (std::size_t i = 0; i < ns.size(); ++i) {
        n_table(static_cast<Eigen::Index>(i), 0) = static_cast<double>(ns[i]);
        n_table(static_cast<Eigen::Index>(i), 1) = r.n_gaps[i];
      }
      mfg::write_csv((std::filesystem::path(study_out) / "study_n.csv").string(), n_table,
                     mfg::CsvSchema{"study_n", 1, {"N", "rms_gap"}, {"agents", "capital"}});
      const std::map<std::string, double> slopes = {{"meanfield_dt_slope", r.dt.slope},
                                                    {"price_dt_slope", r.price_slope},
                                                    {"adjoint_dt_slope", r.adjoint_slope},
                                                    {"chaos_n_slope", r.n_slope}};
      mfg::write_diagnostics((std::filesystem::path(study_out) / "study_slopes.csv").string(), slopes);
      for (const auto& [name, value] : slopes) {
        std::cout << name << " = " << mfg::format_double(value) << '\n';
      }
      return 0;
    }
  } catch (const mfg::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const mfg::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
