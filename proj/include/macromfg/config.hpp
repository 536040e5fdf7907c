#pragma once

#include "macromfg/linalg.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mfg {

enum class Variant { NoAggregateShock, AggregateShock, GeneralNGroup, BoundedRationality };

/// Diagonal drift term of a group's capital equation:
/// InvestmentCost uses |Phi(iota*_t) - delta|, HouseholdLinear uses (1 - delta).
enum class DriftForm { InvestmentCost, HouseholdLinear };

struct GroupParams {
  std::string label;
  double lambda = 0.0;      // weight on the global average vs. own-group average
  double alpha = 1.0;       // limit population fraction
  double delta = 0.05;      // depreciation / adjustment speed
  double sigma_idio = 0.0;  // idiosyncratic capital volatility
  double rho = 0.02;        // utility discount rate
  double gamma = 2.0;       // CRRA curvature
  double phi = 1.0;         // retained fraction of market risk
  double phi_floor = 0.0;   // lower bound on phi
  double corr_with_market = 0.0;
  DriftForm drift_form = DriftForm::InvestmentCost;

  bool operator==(const GroupParams&) const = default;
};

struct PriceParams {
  double q0 = 1.0;
  double mu_q = 0.0;
  double sigma_q = 0.0;
  double kappa = 1.0;  // investment adjustment cost

  bool operator==(const PriceParams&) const = default;
};

/// Uniform action grid [lo, hi] with `points` nodes.
struct ActionGrid {
  double lo = 1e-3;
  double hi = 5.0;
  std::size_t points = 512;

  std::vector<double> values() const {
    std::vector<double> v(points);
    if (points == 1) {
      v[0] = lo;
      return v;
    }
    const double h = (hi - lo) / static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) v[i] = lo + h * static_cast<double>(i);
    v.back() = hi;
    return v;
  }

  bool operator==(const ActionGrid&) const = default;
};

struct ScenarioConfig {
  Variant variant = Variant::NoAggregateShock;
  std::vector<GroupParams> groups;
  /// Pairwise idiosyncratic correlations between group shocks (n x n, unit diagonal).
  std::vector<std::vector<double>> cross_corr;
  double sigma_common = 0.0;  // loading of W on capital; zero without aggregate shocks
  PriceParams price;
  double r = 0.02;
  double horizon = 800.0 / 52.0;
  double dt = 1.0 / 52.0;
  std::vector<std::size_t> n_agents;  // finite-player counts per group
  std::size_t n_paths = 1;
  std::uint64_t seed = 0;
  std::vector<double> m0, k0, w0;
  // Bounded-rationality settings.
  double lambda_c = 1.0;
  double lambda_phi = 1.0;
  ActionGrid c_grid{1e-3, 5.0, 512};
  std::size_t phi_grid_points = 256;  // grid spans [phi_floor_j, 1]

  std::size_t group_count() const { return groups.size(); }

  std::size_t steps() const {
    return static_cast<std::size_t>(std::llround(horizon / dt));
  }

  double time(std::size_t step) const { return dt * static_cast<double>(step); }

  bool operator==(const ScenarioConfig&) const = default;
};

/// Correlation matrix of (W, B^1, ..., B^n) in that order.
inline Matrix correlation_matrix(const ScenarioConfig& config) {
  const auto n = static_cast<Eigen::Index>(config.group_count());
  Matrix c = Matrix::Identity(n + 1, n + 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double p = config.groups[static_cast<std::size_t>(j)].corr_with_market;
    c(0, j + 1) = p;
    c(j + 1, 0) = p;
  }
  if (config.cross_corr.size() == static_cast<std::size_t>(n)) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = config.cross_corr[static_cast<std::size_t>(i)];
      if (row.size() != static_cast<std::size_t>(n)) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i != j) c(i + 1, j + 1) = row[static_cast<std::size_t>(j)];
      }
    }
  }
  return c;
}

struct ValidationReport {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }

  std::string summary() const {
    std::string s;
    for (const auto& v : violations) {
      if (!s.empty()) s += "; ";
      s += v;
    }
    return s;
  }
};

inline bool variant_is_two_group(Variant v) {
  return v == Variant::NoAggregateShock || v == Variant::AggregateShock;
}

inline ValidationReport validate(const ScenarioConfig& config) {
  ValidationReport report;
  auto fail = [&](std::string msg) { report.violations.push_back(std::move(msg)); };
  auto finite = [](double x) { return std::isfinite(x); };

  const std::size_t n = config.group_count();
  if (n == 0) {
    fail("no groups configured");
    return report;
  }
  if (variant_is_two_group(config.variant) && n != 2) {
    fail("two-group variant requires exactly 2 groups (got " + std::to_string(n) + ")");
  }

  double alpha_sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& g = config.groups[j];
    const std::string at = "groups[" + std::to_string(j) + "]";
    for (double x : {g.lambda, g.alpha, g.delta, g.sigma_idio, g.rho, g.gamma, g.phi,
                     g.phi_floor, g.corr_with_market}) {
      if (!finite(x)) {
        fail(at + ": non-finite parameter");
        break;
      }
    }
    if (g.lambda < 0.0 || g.lambda > 1.0) fail(at + ".lambda outside [0,1]");
    if (!(g.alpha > 0.0) || g.alpha > 1.0) fail(at + ".alpha outside (0,1]");
    if (!(g.delta > 0.0)) fail(at + ".delta must be > 0");
    if (g.sigma_idio < 0.0) fail(at + ".sigma_idio must be >= 0");
    if (!(g.gamma > 0.0) || g.gamma == 1.0) fail(at + ".gamma must be > 0 and != 1");
    if (g.phi < 0.0 || g.phi > 1.0) fail(at + ".phi outside [0,1]");
    if (g.phi_floor < 0.0 || g.phi_floor > 1.0) fail(at + ".phi_floor outside [0,1]");
    if (g.phi < g.phi_floor) fail(at + ".phi below phi_floor");
    if (g.corr_with_market < -1.0 || g.corr_with_market > 1.0) {
      fail(at + ".corr_with_market outside [-1,1]");
    }
    if (g.drift_form == DriftForm::HouseholdLinear && !(g.delta < 1.0)) {
      fail(at + ": HouseholdLinear drift requires delta < 1");
    }
    alpha_sum += g.alpha;
  }
  if (std::abs(alpha_sum - 1.0) > 1e-9) {
    fail("alpha sum != 1 (got " + std::to_string(alpha_sum) + ")");
  }

  bool corr_shape_ok = config.cross_corr.size() == n;
  for (const auto& row : config.cross_corr) corr_shape_ok = corr_shape_ok && row.size() == n;
  if (!corr_shape_ok) {
    fail("cross_corr must be " + std::to_string(n) + "x" + std::to_string(n));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (config.cross_corr[i][i] != 1.0) fail("cross_corr diagonal must be 1");
      for (std::size_t j = 0; j < n; ++j) {
        const double p = config.cross_corr[i][j];
        if (!finite(p) || p < -1.0 || p > 1.0) fail("cross_corr entry outside [-1,1]");
        if (p != config.cross_corr[j][i]) fail("cross_corr not symmetric");
      }
    }
    if (!psd_cholesky(correlation_matrix(config))) fail("correlation matrix not PSD");
  }

  if (!finite(config.sigma_common) || config.sigma_common < 0.0) {
    fail("sigma_common must be >= 0");
  }
  if (config.variant == Variant::NoAggregateShock && config.sigma_common != 0.0) {
    fail("NoAggregateShock variant requires sigma_common = 0");
  }

  const auto& p = config.price;
  if (!(p.q0 > 0.0) || !finite(p.q0)) fail("price.q0 must be > 0");
  if (!(p.kappa > 0.0) || !finite(p.kappa)) fail("price.kappa must be > 0");
  if (!(p.sigma_q >= 0.0) || !finite(p.sigma_q)) fail("price.sigma_q must be >= 0");
  if (!finite(p.mu_q)) fail("price.mu_q must be finite");
  if (!finite(config.r)) fail("r must be finite");

  if (!(config.horizon > 0.0) || !finite(config.horizon)) fail("horizon must be > 0");
  if (!(config.dt > 0.0) || !finite(config.dt)) {
    fail("dt must be > 0");
  } else if (config.horizon > 0.0) {
    const double ratio = config.horizon / config.dt;
    if (ratio < 1.0 - 1e-9 || std::abs(ratio - std::round(ratio)) > 1e-9 * ratio) {
      fail("dt does not divide horizon");
    }
  }

  if (!config.n_agents.empty() && config.n_agents.size() != n) {
    fail("n_agents must list one count per group");
  }
  for (auto count : config.n_agents) {
    if (count == 0) fail("n_agents entries must be >= 1");
  }
  if (config.n_paths == 0) fail("n_paths must be >= 1");
  if (config.m0.size() != n) fail("m0 must have one entry per group");
  if (config.k0.size() != n) fail("k0 must have one entry per group");
  if (config.w0.size() != n) fail("w0 must have one entry per group");

  if (config.variant == Variant::BoundedRationality) {
    if (!(config.lambda_c > 0.0)) fail("lambda_c must be > 0");
    if (!(config.lambda_phi > 0.0)) fail("lambda_phi must be > 0");
    if (!(config.c_grid.lo > 0.0)) fail("c_grid.lo must be > 0");
    if (config.c_grid.hi < config.c_grid.lo) fail("c_grid.hi below c_grid.lo");
    if (config.c_grid.points == 0) fail("c_grid.points must be >= 1");
    if (config.phi_grid_points == 0) fail("phi_grid_points must be >= 1");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Scenario presets

/// Expert/household economy. Defaults are declared, not calibrated.
inline ScenarioConfig default_two_group(Variant variant = Variant::NoAggregateShock) {
  ScenarioConfig c;
  c.variant = variant;

  GroupParams expert;
  expert.label = "expert";
  expert.lambda = 0.5;
  expert.alpha = 0.4;
  expert.delta = 0.8;
  expert.sigma_idio = 0.3;
  expert.rho = 0.05;
  expert.gamma = 2.0;
  expert.phi = 0.7;
  expert.phi_floor = 0.5;
  expert.corr_with_market = 0.3;
  expert.drift_form = DriftForm::InvestmentCost;

  GroupParams household;
  household.label = "household";
  household.lambda = 0.5;
  household.alpha = 0.6;
  household.delta = 0.1;
  household.sigma_idio = 0.2;
  household.rho = 0.02;  // households discount at the risk-free rate
  household.gamma = 2.0;
  household.phi = 0.3;
  household.phi_floor = 0.0;
  household.corr_with_market = -0.2;
  household.drift_form = DriftForm::HouseholdLinear;

  c.groups = {expert, household};
  c.cross_corr = {{1.0, -0.6}, {-0.6, 1.0}};
  c.sigma_common = variant == Variant::NoAggregateShock ? 0.0 : 0.3;
  c.price = PriceParams{1.0, 0.02, 0.15, 2.0};
  c.r = 0.02;
  c.horizon = 800.0 / 52.0;
  c.dt = 1.0 / 52.0;
  c.n_agents = {40, 60};
  c.n_paths = 200;
  c.seed = 20240611;
  c.m0 = {1.0, 1.0};
  c.k0 = {1.0, 1.0};
  c.w0 = {5.0, 5.0};
  return c;
}

/// Heterogeneous four-group economy for the n-group model.
inline ScenarioConfig default_four_group(Variant variant = Variant::GeneralNGroup) {
  ScenarioConfig c;
  c.variant = variant;
  const double lambda[] = {0.2, 0.5, 0.7, 0.9};
  const double alpha[] = {0.1, 0.2, 0.3, 0.4};
  const double delta[] = {0.75, 0.9, 0.8, 0.15};
  const double sigma[] = {0.1, 0.2, 0.3, 0.4};
  const double rho[] = {0.05, 0.04, 0.03, 0.02};
  const double phi[] = {0.4, 0.3, 0.2, 0.1};
  const double floor[] = {0.3, 0.2, 0.1, 0.0};
  const double corr[] = {0.3, 0.1, -0.1, -0.2};
  for (int j = 0; j < 4; ++j) {
    GroupParams g;
    g.label = "group" + std::to_string(j + 1);
    g.lambda = lambda[j];
    g.alpha = alpha[j];
    g.delta = delta[j];
    g.sigma_idio = sigma[j];
    g.rho = rho[j];
    g.gamma = 2.0;
    g.phi = phi[j];
    g.phi_floor = floor[j];
    g.corr_with_market = corr[j];
    g.drift_form = j == 3 ? DriftForm::HouseholdLinear : DriftForm::InvestmentCost;
    c.groups.push_back(g);
  }
  c.cross_corr.assign(4, std::vector<double>(4, 0.1));
  for (int j = 0; j < 4; ++j) c.cross_corr[j][j] = 1.0;
  c.sigma_common = 0.2;
  c.price = PriceParams{1.0, 0.02, 0.15, 2.0};
  c.n_agents = {20, 40, 60, 80};
  c.n_paths = 200;
  c.seed = 20240612;
  c.m0.assign(4, 1.0);
  c.k0.assign(4, 1.0);
  c.w0.assign(4, 5.0);
  return c;
}

inline ScenarioConfig default_scenario(Variant variant) {
  return variant == Variant::GeneralNGroup ? default_four_group(variant)
                                           : default_two_group(variant);
}

// ---------------------------------------------------------------------------
// Serialization

/// Load/parse/validation failure. `field` names the offending key when known.
class ConfigError : public std::runtime_error {
 public:
  enum class Kind { Io, Parse, Validation };

  ConfigError(Kind kind, const std::string& msg, std::string field = {})
      : std::runtime_error(msg), kind_(kind), field_(std::move(field)) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  Kind kind_;
  std::string field_;
};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::NoAggregateShock: return "NoAggregateShock";
    case Variant::AggregateShock: return "AggregateShock";
    case Variant::GeneralNGroup: return "GeneralNGroup";
    case Variant::BoundedRationality: return "BoundedRationality";
  }
  return "?";
}

inline std::string to_string(DriftForm f) {
  return f == DriftForm::InvestmentCost ? "InvestmentCost" : "HouseholdLinear";
}

inline Variant parse_variant(std::string_view s) {
  for (auto v : {Variant::NoAggregateShock, Variant::AggregateShock, Variant::GeneralNGroup,
                 Variant::BoundedRationality}) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError(ConfigError::Kind::Parse, "unknown variant '" + std::string(s) + "'",
                    "variant");
}

inline DriftForm parse_drift_form(std::string_view s, const std::string& field) {
  if (s == "InvestmentCost") return DriftForm::InvestmentCost;
  if (s == "HouseholdLinear") return DriftForm::HouseholdLinear;
  throw ConfigError(ConfigError::Kind::Parse, field + ": unknown drift_form '" + std::string(s) + "'",
                    field);
}

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, const char* key, const std::string& path) {
  const std::string field = path.empty() ? key : path + "." + key;
  if (!obj.is_object() || !obj.contains(key)) {
    throw ConfigError(ConfigError::Kind::Parse, "missing required field '" + field + "'", field);
  }
  return obj.at(key);
}

template <class T>
T as(const json& value, const std::string& field) {
  try {
    return value.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(ConfigError::Kind::Parse, field + ": " + e.what(), field);
  }
}

template <class T>
T required(const json& obj, const char* key, const std::string& path = {}) {
  const std::string field = path.empty() ? key : path + "." + key;
  return as<T>(require(obj, key, path), field);
}

template <class T>
T optional(const json& obj, const char* key, T fallback, const std::string& path = {}) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  const std::string field = path.empty() ? key : path + "." + key;
  return as<T>(obj.at(key), field);
}

}  // namespace detail

inline nlohmann::json to_json(const ScenarioConfig& c) {
  using nlohmann::json;
  json groups = json::array();
  for (const auto& g : c.groups) {
    groups.push_back({{"label", g.label},
                      {"lambda", g.lambda},
                      {"alpha", g.alpha},
                      {"delta", g.delta},
                      {"sigma_idio", g.sigma_idio},
                      {"rho", g.rho},
                      {"gamma", g.gamma},
                      {"phi", g.phi},
                      {"phi_floor", g.phi_floor},
                      {"corr_with_market", g.corr_with_market},
                      {"drift_form", to_string(g.drift_form)}});
  }
  return json{{"variant", to_string(c.variant)},
              {"groups", groups},
              {"cross_corr", c.cross_corr},
              {"sigma_common", c.sigma_common},
              {"price",
               {{"q0", c.price.q0},
                {"mu_q", c.price.mu_q},
                {"sigma_q", c.price.sigma_q},
                {"kappa", c.price.kappa}}},
              {"r", c.r},
              {"horizon", c.horizon},
              {"dt", c.dt},
              {"n_agents", c.n_agents},
              {"n_paths", c.n_paths},
              {"seed", c.seed},
              {"m0", c.m0},
              {"k0", c.k0},
              {"w0", c.w0},
              {"relaxed",
               {{"lambda_c", c.lambda_c},
                {"lambda_phi", c.lambda_phi},
                {"c_grid", {{"lo", c.c_grid.lo}, {"hi", c.c_grid.hi}, {"points", c.c_grid.points}}},
                {"phi_grid_points", c.phi_grid_points}}}};
}

/// Builds a config from a parsed document. Does not validate.
inline ScenarioConfig from_json(const nlohmann::json& doc) {
  using detail::as;
  using detail::optional;
  using detail::require;
  using detail::required;

  ScenarioConfig c;
  c.variant = parse_variant(required<std::string>(doc, "variant"));

  const auto& groups = require(doc, "groups", "");
  if (!groups.is_array()) {
    throw ConfigError(ConfigError::Kind::Parse, "groups: expected an array", "groups");
  }
  for (std::size_t j = 0; j < groups.size(); ++j) {
    const std::string at = "groups[" + std::to_string(j) + "]";
    const auto& node = groups[j];
    GroupParams g;
    g.label = optional<std::string>(node, "label", "group" + std::to_string(j + 1), at);
    g.lambda = required<double>(node, "lambda", at);
    g.alpha = required<double>(node, "alpha", at);
    g.delta = required<double>(node, "delta", at);
    g.sigma_idio = required<double>(node, "sigma_idio", at);
    g.rho = required<double>(node, "rho", at);
    g.gamma = optional<double>(node, "gamma", 2.0, at);
    g.phi = required<double>(node, "phi", at);
    g.phi_floor = optional<double>(node, "phi_floor", 0.0, at);
    g.corr_with_market = optional<double>(node, "corr_with_market", 0.0, at);
    g.drift_form = parse_drift_form(
        optional<std::string>(node, "drift_form", "InvestmentCost", at), at + ".drift_form");
    c.groups.push_back(std::move(g));
  }
  const std::size_t n = c.groups.size();

  if (doc.contains("cross_corr")) {
    c.cross_corr = as<std::vector<std::vector<double>>>(doc.at("cross_corr"), "cross_corr");
  } else {
    c.cross_corr.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) c.cross_corr[j][j] = 1.0;
  }
  c.sigma_common = optional<double>(doc, "sigma_common", 0.0);

  const auto& price = require(doc, "price", "");
  c.price.q0 = required<double>(price, "q0", "price");
  c.price.mu_q = required<double>(price, "mu_q", "price");
  c.price.sigma_q = required<double>(price, "sigma_q", "price");
  c.price.kappa = required<double>(price, "kappa", "price");

  c.r = optional<double>(doc, "r", 0.02);
  c.horizon = required<double>(doc, "horizon");
  c.dt = required<double>(doc, "dt");
  c.n_agents = optional<std::vector<std::size_t>>(doc, "n_agents", {});
  c.n_paths = optional<std::size_t>(doc, "n_paths", 1);
  c.seed = optional<std::uint64_t>(doc, "seed", 0);
  c.m0 = required<std::vector<double>>(doc, "m0");
  c.k0 = optional<std::vector<double>>(doc, "k0", c.m0);
  c.w0 = required<std::vector<double>>(doc, "w0");

  if (doc.contains("relaxed")) {
    const auto& rel = doc.at("relaxed");
    c.lambda_c = optional<double>(rel, "lambda_c", c.lambda_c, "relaxed");
    c.lambda_phi = optional<double>(rel, "lambda_phi", c.lambda_phi, "relaxed");
    if (rel.contains("c_grid")) {
      const auto& grid = rel.at("c_grid");
      c.c_grid.lo = required<double>(grid, "lo", "relaxed.c_grid");
      c.c_grid.hi = required<double>(grid, "hi", "relaxed.c_grid");
      c.c_grid.points = required<std::size_t>(grid, "points", "relaxed.c_grid");
    }
    c.phi_grid_points = optional<std::size_t>(rel, "phi_grid_points", c.phi_grid_points, "relaxed");
  }
  return c;
}

/// Parses a scenario document; parse errors carry line/column from the JSON reader.
inline ScenarioConfig parse_config(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(ConfigError::Kind::Parse, e.what());
  }
  return from_json(doc);
}

inline ScenarioConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(ConfigError::Kind::Io, "cannot open scenario file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  ScenarioConfig config = parse_config(buf.str());
  const auto report = validate(config);
  if (!report.ok()) {
    throw ConfigError(ConfigError::Kind::Validation,
                      "invalid scenario '" + path + "': " + report.summary());
  }
  return config;
}

inline void save(const ScenarioConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError(ConfigError::Kind::Io, "cannot write scenario file '" + path + "'");
  out << to_json(config).dump(2) << '\n';
}

/// 64-bit FNV-1a digest of the canonical serialization, as 16 hex digits.
inline std::string config_digest(const ScenarioConfig& config) {
  const std::string canonical = to_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace mfg
