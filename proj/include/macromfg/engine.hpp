#pragma once

#include "macromfg/agents.hpp"
#include "macromfg/config.hpp"
#include "macromfg/io.hpp"
#include "macromfg/meanfield.hpp"
#include "macromfg/noise.hpp"
#include "macromfg/price.hpp"
#include "macromfg/relaxed.hpp"
#include "macromfg/stats.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mfg {

inline constexpr const char* kVersion = "1.0.0";

/// Ensemble mean and standard error (sample sd / sqrt(n)) per grid point and group.
struct SeriesStats {
  Matrix mean;
  Matrix se;
};

/// Welford accumulator over equally shaped matrices.
class SeriesAccumulator {
 public:
  void add(const Matrix& x) {
    if (n_ == 0) {
      mean_ = Matrix::Zero(x.rows(), x.cols());
      m2_ = Matrix::Zero(x.rows(), x.cols());
    }
    ++n_;
    const Matrix delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta.cwiseProduct(x - mean_);
  }

  std::size_t count() const { return n_; }

  SeriesStats stats() const {
    SeriesStats s{mean_, Matrix::Zero(mean_.rows(), mean_.cols())};
    if (n_ > 1) {
      const double n = static_cast<double>(n_);
      s.se = (m2_ / (n - 1.0)).cwiseSqrt() / std::sqrt(n);
    }
    return s;
  }

 private:
  Matrix mean_, m2_;
  std::size_t n_ = 0;
};

struct RunOptions {
  PriceScheme scheme = PriceScheme::ExactLognormal;
  bool frozen_common = false;  // every path reuses path 0's W
  bool finite_players = false;  // also simulate the N-player economy on every path
  bool record_agents = false;   // keep per-agent paths of path 0
  std::size_t order_paths = 4;  // paths in the in-run dt-halving study; 0 skips it
};

struct RunResult {
  ScenarioConfig config;
  std::string digest;  // config digest
  RunOptions options;
  PricePath price;     // path 0
  MeanFieldPath mf;    // closed-form path 0
  SeriesStats m;       // ensemble of closed-form m
  SeriesStats k, w, c;  // representative agents
  std::optional<SeriesStats> fp_k, fp_w;  // finite players
  std::optional<AgentPaths> agents;       // per-agent paths of path 0
  std::optional<SeriesStats> relaxed_w;
  std::optional<RelaxedControls> relaxed;
  std::map<std::string, double> diagnostics;
};

namespace detail {

inline std::string scenario_context(const ScenarioConfig& config, std::size_t path) {
  return "scenario " + to_string(config.variant) + " (seed " + std::to_string(config.seed) +
         "), path " + std::to_string(path) + ": ";
}

}  // namespace detail

/// Closed-form vs EM gaps over a dt ladder on shared Brownian paths. The
/// finest dt drives the noise; coarser grids see the summed increments.
struct DtStudy {
  std::vector<double> dts;
  std::vector<double> gaps;  // mean over paths of max-abs gap
  double slope = 0.0;
};

inline DtStudy oracle_dt_study(const ScenarioConfig& config, const std::vector<double>& dts,
                               std::size_t paths,
                               PriceScheme scheme = PriceScheme::ExactLognormal) {
  if (dts.size() < 2) throw std::invalid_argument("dt study needs at least two step sizes");
  const double finest = *std::min_element(dts.begin(), dts.end());
  ScenarioConfig fine = config;
  fine.dt = finest;
  std::vector<std::size_t> factors;
  for (double dt : dts) {
    const double ratio = dt / finest;
    const auto f = static_cast<std::size_t>(std::llround(ratio));
    if (f == 0 || std::abs(ratio - static_cast<double>(f)) > 1e-9 * ratio) {
      throw std::invalid_argument("dt ladder: every dt must be a multiple of the finest");
    }
    factors.push_back(f);
  }
  DtStudy study{dts, std::vector<double>(dts.size(), 0.0), 0.0};
  for (std::size_t p = 0; p < paths; ++p) {
    const NoiseBundle base = generate_path(fine, NoiseMode::GroupLevel, p);
    for (std::size_t d = 0; d < dts.size(); ++d) {
      const NoiseBundle noise = factors[d] == 1 ? base : coarsen(base, factors[d]);
      ScenarioConfig c = config;
      c.dt = noise.dt;
      const PricePath price = simulate_price(c.price, noise.dW, noise.dt, scheme);
      study.gaps[d] += max_abs_gap(solve_meanfield(c, noise, price), em_oracle(c, noise, price));
    }
  }
  for (auto& g : study.gaps) g /= static_cast<double>(std::max<std::size_t>(paths, 1));
  study.slope = loglog_slope(study.dts, study.gaps);
  return study;
}

/// Runs the scenario end to end. Deterministic in (config, options).
inline RunResult run(const ScenarioConfig& config, const RunOptions& options = {}) {
  const auto report = validate(config);
  if (!report.ok()) {
    throw ConfigError(ConfigError::Kind::Validation, "invalid scenario: " + report.summary());
  }
  RunResult result;
  result.config = config;
  result.digest = config_digest(config);
  result.options = options;

  const bool relaxed = config.variant == Variant::BoundedRationality;
  if (relaxed) result.relaxed = build_relaxed_controls(config);
  if (options.finite_players && config.n_agents.size() != config.group_count()) {
    throw ConfigError(ConfigError::Kind::Validation, "finite-player run needs n_agents per group");
  }

  SeriesAccumulator acc_m, acc_k, acc_w, acc_c, acc_fk, acc_fw, acc_rw;
  double gap_max = 0.0, gap_sum = 0.0, residual_max = 0.0, dW_sensitivity = 0.0;
  double min_det = INFINITY;
  std::size_t clamp_events = 0, negative_rep = 0, negative_fp = 0;
  NoiseOptions noise_options{options.frozen_common};

  for (std::size_t p = 0; p < config.n_paths; ++p) {
    try {
      const NoiseBundle noise = generate_path(config, NoiseMode::GroupLevel, p, noise_options);
      const PricePath price = simulate_price(config.price, noise.dW, config.dt, options.scheme);
      clamp_events += price.clamp_events;
      MeanFieldPath mf = solve_meanfield(config, noise, price);
      const MeanFieldPath em = em_oracle(config, noise, price);
      const double gap = max_abs_gap(mf, em);
      gap_max = std::max(gap_max, gap);
      gap_sum += gap;
      residual_max = std::max(residual_max, mf.max_inverse_residual);
      min_det = std::min(min_det, mf.min_det);
      acc_m.add(mf.m);

      const AgentPaths rep = simulate_representative(config, noise, price, mf);
      negative_rep += rep.negative_capital_events;
      acc_k.add(rep.k_mean);
      acc_w.add(rep.w_mean);
      acc_c.add(rep.c_mean);

      if (relaxed) {
        const AgentPaths rw = simulate_relaxed_wealth(config, *result.relaxed, noise, price, mf);
        acc_rw.add(rw.w_mean);
      }
      if (options.finite_players) {
        const NoiseBundle agent_noise =
            generate_path(config, NoiseMode::AgentLevel, p, noise_options);
        FinitePlayerOptions fo;
        fo.record_agents = options.record_agents && p == 0;
        AgentPaths fp = simulate_finite_players(config, agent_noise, price, fo);
        negative_fp += fp.negative_capital_events;
        acc_fk.add(fp.k_mean);
        acc_fw.add(fp.w_mean);
        if (p == 0 && options.record_agents) result.agents = std::move(fp);
      }
      if (p == 0) {
        // Same price, W removed from the capital noise: any change in m is W's direct effect.
        NoiseBundle no_w = noise;
        std::fill(no_w.dW.begin(), no_w.dW.end(), 0.0);
        dW_sensitivity = max_abs_gap(mf, solve_meanfield(config, no_w, price));
        result.price = price;
        result.mf = std::move(mf);
      }
    } catch (const NumericalError& e) {
      throw NumericalError(detail::scenario_context(config, p) + e.what());
    }
  }

  result.m = acc_m.stats();
  result.k = acc_k.stats();
  result.w = acc_w.stats();
  result.c = acc_c.stats();
  if (options.finite_players) {
    result.fp_k = acc_fk.stats();
    result.fp_w = acc_fw.stats();
  }
  if (relaxed) result.relaxed_w = acc_rw.stats();

  auto& d = result.diagnostics;
  const double paths = static_cast<double>(config.n_paths);
  d["closed_form_vs_em_gap"] = gap_max;
  d["closed_form_vs_em_gap_mean"] = gap_sum / paths;
  d["vvinv_residual_max"] = residual_max;
  d["det_v_min"] = min_det;
  d["row_weight_defect"] = row_weight_defect(config);
  d["foc_residual_max"] = max_foc_residual(config);
  d["k_negative_events"] = static_cast<double>(negative_rep + negative_fp);
  d["k_negative_events_representative"] = static_cast<double>(negative_rep);
  d["k_negative_events_finite_players"] = static_cast<double>(negative_fp);
  d["price_clamp_events"] = static_cast<double>(clamp_events);
  d["common_noise_loading"] = common_loading(config)(0, 0);
  d["direct_dW_sensitivity"] = dW_sensitivity;
  d["n_paths"] = paths;
  if (options.order_paths > 0) {
    const auto study = oracle_dt_study(config, {config.dt, config.dt / 2, config.dt / 4},
                                       options.order_paths, options.scheme);
    d["oracle_order_slope"] = study.slope;
  }
  if (relaxed) {
    const auto last = static_cast<Eigen::Index>(config.steps());
    for (std::size_t j = 0; j < config.group_count(); ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      d["relaxed_minus_classical_terminal_wealth_" + config.groups[j].label] =
          result.relaxed_w->mean(last, col) - result.w.mean(last, col);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Convergence study

struct StudyResult {
  DtStudy dt;
  std::vector<double> price_dts;
  std::vector<double> price_rmse;  // EM vs exact GBM at T
  double price_slope = 0.0;
  std::vector<double> adjoint_gap;  // max |backward - closed form| per dt
  double adjoint_slope = 0.0;
  std::vector<std::size_t> Ns;
  std::vector<double> n_gaps;  // RMS finite-player vs mean-field gap
  double n_slope = 0.0;
};

/// Finite-player group means against the W-conditional mean field at one N.
/// Group sizes are round(alpha_j N); the mean field uses the realized
/// fractions so that only the finite-N error is measured.
inline double chaos_gap(const ScenarioConfig& config, std::size_t N, std::size_t paths) {
  ScenarioConfig c = config;
  std::size_t total = 0;
  c.n_agents.resize(c.group_count());
  for (std::size_t j = 0; j < c.group_count(); ++j) {
    c.n_agents[j] = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(c.groups[j].alpha * static_cast<double>(N))));
    total += c.n_agents[j];
  }
  for (std::size_t j = 0; j < c.group_count(); ++j) {
    c.groups[j].alpha = static_cast<double>(c.n_agents[j]) / static_cast<double>(total);
  }
  c.m0 = c.k0;
  double ss = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < paths; ++p) {
    const NoiseBundle agent_noise = generate_path(c, NoiseMode::AgentLevel, p);
    const NoiseBundle group_noise = generate_path(c, NoiseMode::GroupLevel, p);
    const PricePath price = simulate_price(c.price, agent_noise.dW, c.dt);
    const AgentPaths fp = simulate_finite_players(c, agent_noise, price);
    const MeanFieldPath mf = em_oracle(c, group_noise, price, NoiseProjection::WConditional);
    ss += (fp.k_mean - mf.m).squaredNorm();
    count += static_cast<std::size_t>(mf.m.size());
  }
  return std::sqrt(ss / static_cast<double>(count));
}

inline StudyResult convergence_study(const ScenarioConfig& config, const std::vector<double>& dts,
                                     const std::vector<std::size_t>& Ns, std::size_t dt_paths,
                                     std::size_t n_paths) {
  StudyResult out;
  out.dt = oracle_dt_study(config, dts, dt_paths);

  // GBM: EM against the exact solution on the same increments.
  const double finest = *std::min_element(dts.begin(), dts.end());
  ScenarioConfig fine = config;
  fine.dt = finest;
  out.price_dts = dts;
  out.price_rmse.assign(dts.size(), 0.0);
  const std::size_t price_paths = std::max<std::size_t>(dt_paths, 1);
  for (std::size_t p = 0; p < price_paths; ++p) {
    RandomStream rng(stream_seed(config.seed, p, Stream::Sampling));
    std::vector<double> dW(fine.steps());
    for (auto& x : dW) x = std::sqrt(finest) * rng.normal();
    for (std::size_t d = 0; d < dts.size(); ++d) {
      const auto f = static_cast<std::size_t>(std::llround(dts[d] / finest));
      std::vector<double> coarse(dW.size() / f, 0.0);
      for (std::size_t i = 0; i < coarse.size() * f; ++i) coarse[i / f] += dW[i];
      const auto exact = simulate_price(config.price, coarse, dts[d], PriceScheme::ExactLognormal);
      const auto em = simulate_price(config.price, coarse, dts[d], PriceScheme::EulerMaruyama);
      const double e = em.q.back() - exact.q.back();
      out.price_rmse[d] += e * e;
    }
  }
  for (auto& x : out.price_rmse) x = std::sqrt(x / static_cast<double>(price_paths));
  out.price_slope = loglog_slope(out.price_dts, out.price_rmse);

  for (double dt : dts) {
    const auto steps = static_cast<std::size_t>(std::llround(config.horizon / dt));
    const auto closed = adjoint_path(config.r, dt, steps);
    const auto back = adjoint_backward(config.r, dt, steps);
    double gap = 0.0;
    for (std::size_t i = 0; i <= steps; ++i) gap = std::max(gap, std::abs(closed.y[i] - back.y[i]));
    out.adjoint_gap.push_back(gap);
  }
  out.adjoint_slope = loglog_slope(dts, out.adjoint_gap);

  if (!Ns.empty()) {
    out.Ns = Ns;
    std::vector<double> xs;
    for (auto N : Ns) {
      out.n_gaps.push_back(chaos_gap(config, N, n_paths));
      xs.push_back(static_cast<double>(N));
    }
    if (Ns.size() >= 2) out.n_slope = loglog_slope(xs, out.n_gaps);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output files

inline std::vector<std::string> group_labels(const ScenarioConfig& config) {
  std::vector<std::string> labels;
  for (const auto& g : config.groups) labels.push_back(g.label);
  return labels;
}

inline CsvSchema meanfield_schema(const std::vector<std::string>& labels) {
  CsvSchema s{"meanfield", 1, {"t"}, {"years"}};
  for (const auto& l : labels) {
    s.columns.push_back("m_" + l);
    s.units.push_back("capital");
  }
  s.columns.push_back("M_global");
  s.units.push_back("capital");
  for (const auto& l : labels) {
    s.columns.push_back("M_rel_" + l);
    s.units.push_back("capital");
  }
  return s;
}

inline Matrix meanfield_table(const MeanFieldPath& mf) {
  const auto rows = mf.m.rows();
  const auto n = mf.m.cols();
  Matrix t(rows, 2 * n + 2);
  for (Eigen::Index i = 0; i < rows; ++i) t(i, 0) = mf.dt * static_cast<double>(i);
  t.middleCols(1, n) = mf.m;
  t.col(n + 1) = mf.M_global;
  t.middleCols(n + 2, n) = mf.M_rel;
  return t;
}

/// Rebuilds a MeanFieldPath (without v) from its table; averages are recomputed.
inline MeanFieldPath meanfield_from_table(const ScenarioConfig& config, const Matrix& table) {
  const auto n = static_cast<Eigen::Index>(config.group_count());
  if (table.cols() != 2 * n + 2 || table.rows() < 1) {
    throw IoError("meanfield table has the wrong shape for this scenario");
  }
  MeanFieldPath mf;
  mf.dt = table.rows() > 1 ? table(1, 0) - table(0, 0) : config.dt;
  mf.m = table.middleCols(1, n);
  fill_averages(config, mf);
  return mf;
}

/// Columns t, then per group: {name}_{label}, {name}_{label}_se for each series.
inline CsvSchema aggregates_schema(const std::string& name, const std::vector<std::string>& labels,
                                   const std::vector<std::pair<std::string, std::string>>& series) {
  CsvSchema s{name, 1, {"t"}, {"years"}};
  for (const auto& l : labels) {
    for (const auto& [key, unit] : series) {
      s.columns.push_back(key + "_" + l);
      s.units.push_back(unit);
      s.columns.push_back(key + "_" + l + "_se");
      s.units.push_back(unit);
    }
  }
  return s;
}

inline Matrix aggregates_table(double dt, const std::vector<const SeriesStats*>& series) {
  const auto rows = series.front()->mean.rows();
  const auto n = series.front()->mean.cols();
  const auto per = static_cast<Eigen::Index>(series.size());
  Matrix t(rows, 1 + 2 * per * n);
  for (Eigen::Index i = 0; i < rows; ++i) {
    t(i, 0) = dt * static_cast<double>(i);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index s = 0; s < per; ++s) {
        const Eigen::Index col = 1 + 2 * (j * per + s);
        t(i, col) = series[static_cast<std::size_t>(s)]->mean(i, j);
        t(i, col + 1) = series[static_cast<std::size_t>(s)]->se(i, j);
      }
    }
  }
  return t;
}

inline void write_diagnostics(const std::string& path, const std::map<std::string, double>& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "# schema=diagnostics;version=1;units=-,-\nname,value\n";
  for (const auto& [name, value] : d) out << name << ',' << format_double(value) << '\n';
}

inline std::map<std::string, double> read_diagnostics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  std::map<std::string, double> d;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (row <= 2) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("row " + std::to_string(row) + ": no value", row);
    d[line.substr(0, comma)] = parse_double(std::string_view(line).substr(comma + 1), row);
  }
  return d;
}

struct OutputOptions {
  bool dump_agents = false;   // finite_agents.csv (needs record_agents)
  bool dump_noise = false;    // noise.bin for path 0
  bool dump_policies = false;  // policies.csv (relaxed variant)
};

inline std::string scheme_name(PriceScheme s) {
  return s == PriceScheme::ExactLognormal ? "ExactLognormal" : "EulerMaruyama";
}

/// Writes the run's CSV files and manifest into `dir`. Contents depend only on
/// (config, options): no timestamps or host details.
inline std::vector<std::string> write_outputs(const RunResult& r, const std::string& dir,
                                              const OutputOptions& out = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto labels = group_labels(r.config);
  const auto at = [&](const std::string& name) { return (fs::path(dir) / name).string(); };
  std::vector<std::string> files;

  write_csv(at("meanfield.csv"), meanfield_table(r.mf), meanfield_schema(labels));
  files.push_back("meanfield.csv");

  std::vector<std::pair<std::string, std::string>> series = {
      {"m", "capital"}, {"k", "capital"}, {"w", "wealth"}, {"c", "consumption/year"}};
  std::vector<const SeriesStats*> stats = {&r.m, &r.k, &r.w, &r.c};
  if (r.relaxed_w) {
    series.emplace_back("w_relaxed", "wealth");
    stats.push_back(&*r.relaxed_w);
  }
  write_csv(at("aggregates.csv"), aggregates_table(r.config.dt, stats),
            aggregates_schema("aggregates", labels, series));
  files.push_back("aggregates.csv");

  if (r.fp_k) {
    write_csv(at("finite_players.csv"), aggregates_table(r.config.dt, {&*r.fp_k, &*r.fp_w}),
              aggregates_schema("finite_players", labels, {{"k", "capital"}, {"w", "wealth"}}));
    files.push_back("finite_players.csv");
  }
  if (out.dump_agents && r.agents && r.agents->recorded()) {
    const auto& a = *r.agents;
    const auto rows = a.k.rows();
    const auto na = a.k.cols();
    CsvSchema s{"finite_agents", 1, {"t", "agent", "group", "k", "w", "c"},
                {"years", "-", "-", "capital", "wealth", "consumption/year"}};
    Matrix t(rows * na, 6);
    for (Eigen::Index ag = 0; ag < na; ++ag) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        const Eigen::Index row = ag * rows + i;
        t(row, 0) = a.dt * static_cast<double>(i);
        t(row, 1) = static_cast<double>(ag);
        t(row, 2) = static_cast<double>(a.group_index[static_cast<std::size_t>(ag)]);
        t(row, 3) = a.k(i, ag);
        t(row, 4) = a.w(i, ag);
        t(row, 5) = a.c(i, ag);
      }
    }
    write_csv(at("finite_agents.csv"), t, s);
    files.push_back("finite_agents.csv");
  }
  if (out.dump_policies && r.relaxed) {
    // Densities at t = 0, T/2, T; kind 0 = saving, 1 = risk.
    const auto& rc = *r.relaxed;
    const double T = rc.dt * static_cast<double>(rc.steps);
    std::vector<std::array<double, 5>> rows;
    for (std::size_t j = 0; j < r.config.group_count(); ++j) {
      const auto& g = r.config.groups[j];
      const RelaxedPolicy risk = risk_policy(g, rc.phi_grid[j], rc.lambda_phi);
      for (std::size_t step : {std::size_t{0}, rc.steps / 2, rc.steps}) {
        const double t = rc.dt * static_cast<double>(step);
        const RelaxedPolicy saving = saving_policy(t, g, r.config.r, T, rc.c_grid, rc.lambda_c);
        for (std::size_t i = 0; i < saving.size(); ++i) {
          rows.push_back({t, static_cast<double>(j), 0.0, saving.grid()[i], saving.density()[i]});
        }
        for (std::size_t i = 0; i < risk.size(); ++i) {
          rows.push_back({t, static_cast<double>(j), 1.0, risk.grid()[i], risk.density()[i]});
        }
      }
    }
    Matrix t(static_cast<Eigen::Index>(rows.size()), 5);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (int c = 0; c < 5; ++c) t(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    }
    write_csv(at("policies.csv"), t,
              CsvSchema{"policies", 1, {"t", "group", "kind", "action", "density"},
                        {"years", "-", "-", "action", "1/action"}});
    files.push_back("policies.csv");
  }
  if (out.dump_noise) {
    write_noise(at("noise.bin"),
                generate_path(r.config, NoiseMode::GroupLevel, 0, {r.options.frozen_common}));
    files.push_back("noise.bin");
  }

  write_diagnostics(at("diagnostics.csv"), r.diagnostics);
  files.push_back("diagnostics.csv");

  std::ofstream manifest(at("manifest.txt"), std::ios::binary);
  if (!manifest) throw IoError("cannot write manifest in '" + dir + "'");
  manifest << "mfgsim " << kVersion << '\n'
           << "eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
           << EIGEN_MINOR_VERSION << '\n'
           << "config_digest " << r.digest << '\n'
           << "variant " << to_string(r.config.variant) << '\n'
           << "seed " << r.config.seed << '\n'
           << "n_paths " << r.config.n_paths << '\n'
           << "dt " << format_double(r.config.dt) << '\n'
           << "steps " << r.config.steps() << '\n'
           << "price_scheme " << scheme_name(r.options.scheme) << '\n'
           << "frozen_common " << (r.options.frozen_common ? 1 : 0) << '\n';
  for (const auto& f : files) manifest << "file " << f << '\n';
  files.push_back("manifest.txt");
  return files;
}

}  // namespace mfg
