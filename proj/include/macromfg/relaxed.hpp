#pragma once

#include "macromfg/agents.hpp"
#include "macromfg/config.hpp"
#include "macromfg/meanfield.hpp"
#include "macromfg/noise.hpp"
#include "macromfg/price.hpp"
#include "macromfg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mfg {

/// Gibbs density over a uniform action grid, normalized with trapezoidal
/// weights. A single-point grid is a Dirac policy: weight 1, density 1.
class RelaxedPolicy {
 public:
  RelaxedPolicy(std::vector<double> grid, std::vector<double> log_weights, double temperature)
      : grid_(std::move(grid)), log_weights_(std::move(log_weights)), temperature_(temperature) {
    if (grid_.empty()) throw std::invalid_argument("relaxed policy: empty action grid");
    if (grid_.size() != log_weights_.size()) {
      throw std::invalid_argument("relaxed policy: grid and weights differ in length");
    }
    for (std::size_t i = 1; i < grid_.size(); ++i) {
      if (!(grid_[i] > grid_[i - 1])) {
        throw std::invalid_argument("relaxed policy: grid must be strictly increasing");
      }
    }
    quad_.assign(grid_.size(), 1.0);
    if (grid_.size() > 1) {
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        const double left = i > 0 ? grid_[i] - grid_[i - 1] : 0.0;
        const double right = i + 1 < grid_.size() ? grid_[i + 1] - grid_[i] : 0.0;
        quad_[i] = 0.5 * (left + right);
      }
    }
    for (double lw : log_weights_) {
      // -inf is a zero weight; NaN or +inf has no meaning.
      if (std::isnan(lw) || lw == INFINITY) {
        throw std::invalid_argument("relaxed policy: non-finite log weights");
      }
    }
    // log-sum-exp keeps very peaked (low temperature) densities finite.
    const double top = *std::max_element(log_weights_.begin(), log_weights_.end());
    if (!std::isfinite(top)) throw std::invalid_argument("relaxed policy: non-finite log weights");
    double z = 0.0;
    for (std::size_t i = 0; i < grid_.size(); ++i) z += quad_[i] * std::exp(log_weights_[i] - top);
    normalizer_ = top + std::log(z);
    // Subtract top and divide by z separately: folding log z into a large
    // top first would cost most of the mantissa.
    density_.resize(grid_.size());
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      density_[i] = std::exp(log_weights_[i] - top) / z;
    }
  }

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& log_weights() const { return log_weights_; }
  const std::vector<double>& density() const { return density_; }
  const std::vector<double>& quadrature_weights() const { return quad_; }
  double normalizer() const { return normalizer_; }
  double temperature() const { return temperature_; }
  std::size_t size() const { return grid_.size(); }

  /// Trapezoidal integral of f(x) against the density.
  template <class F>
  double expect(F&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < grid_.size(); ++i) s += quad_[i] * density_[i] * f(grid_[i]);
    return s;
  }

  double mass() const { return expect([](double) { return 1.0; }); }
  double mean() const { return expect([](double x) { return x; }); }
  double second_moment() const { return expect([](double x) { return x * x; }); }

  /// Trapezoidal differential entropy -int p ln p. Zero for a Dirac policy.
  double entropy() const {
    if (grid_.size() == 1) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      if (density_[i] > 0.0) s -= quad_[i] * density_[i] * std::log(density_[i]);
    }
    return s;
  }

  double mode() const {
    const auto it = std::max_element(log_weights_.begin(), log_weights_.end());
    return grid_[static_cast<std::size_t>(it - log_weights_.begin())];
  }

  /// Exact inverse-CDF draw from the piecewise-linear density.
  double sample(RandomStream& rng) const {
    if (grid_.size() == 1) return grid_[0];
    if (cdf_.empty()) build_cdf();
    const double u = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    std::size_t i = it == cdf_.begin() ? 0 : static_cast<std::size_t>(it - cdf_.begin()) - 1;
    i = std::min(i, grid_.size() - 2);
    const double h = grid_[i + 1] - grid_[i];
    const double p0 = density_[i];
    const double slope = (density_[i + 1] - p0) / h;
    const double target = u - cdf_[i];
    // Root of p0 s + slope s^2 / 2 = target, in the cancellation-free form.
    const double disc = std::max(0.0, p0 * p0 + 2.0 * slope * target);
    const double denom = p0 + std::sqrt(disc);
    const double s = denom > 0.0 ? 2.0 * target / denom : 0.0;
    return grid_[i] + std::clamp(s, 0.0, h);
  }

 private:
  void build_cdf() const {
    cdf_.assign(grid_.size(), 0.0);
    for (std::size_t i = 1; i < grid_.size(); ++i) {
      cdf_[i] = cdf_[i - 1] + 0.5 * (grid_[i] - grid_[i - 1]) * (density_[i - 1] + density_[i]);
    }
  }

  std::vector<double> grid_;
  std::vector<double> log_weights_;
  std::vector<double> quad_;
  std::vector<double> density_;
  mutable std::vector<double> cdf_;
  double normalizer_ = 0.0;
  double temperature_ = 1.0;
};

inline RelaxedPolicy dirac_policy(double x) { return RelaxedPolicy({x}, {0.0}, 1.0); }

/// Consumption policy exp[(c^{-gamma} - y e^{rho t}) / lambda_c - 1],
/// y = e^{-r(T-t)}, normalized over the grid.
inline RelaxedPolicy saving_policy(double t, const GroupParams& group, double r, double T,
                                   const std::vector<double>& grid, double lambda_c) {
  if (!(lambda_c > 0.0)) throw std::invalid_argument("saving_policy: lambda_c must be > 0");
  const double shift = adjoint_value(t, r, T) * std::exp(group.rho * t);
  std::vector<double> lw(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw std::invalid_argument("saving_policy: actions must be > 0");
    lw[i] = (std::pow(grid[i], -group.gamma) - shift) / lambda_c - 1.0;
  }
  return RelaxedPolicy(grid, std::move(lw), lambda_c);
}

/// Risk policy exp[(z q (k sigma_q + sigma) e^{rho t} - phi) / lambda_phi - 1].
/// With the deterministic adjoint z = 0 this is a truncated exponential.
inline RelaxedPolicy risk_policy(double t, const GroupParams& group, double q, double k,
                                 double z_w, double sigma_q, double sigma,
                                 const std::vector<double>& grid, double lambda_phi) {
  if (!(lambda_phi > 0.0)) throw std::invalid_argument("risk_policy: lambda_phi must be > 0");
  const double pull = z_w * q * (k * sigma_q + sigma) * std::exp(group.rho * t);
  std::vector<double> lw(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < group.phi_floor - 1e-12 || grid[i] > 1.0 + 1e-12) {
      throw std::invalid_argument("risk_policy: grid must lie in [phi_floor, 1]");
    }
    lw[i] = (pull - grid[i]) / lambda_phi - 1.0;
  }
  return RelaxedPolicy(grid, std::move(lw), lambda_phi);
}

/// Z = 0 risk policy on a uniform grid over [phi_floor, 1].
inline RelaxedPolicy risk_policy(const GroupParams& group, const std::vector<double>& grid,
                                 double lambda_phi) {
  return risk_policy(0.0, group, 1.0, 0.0, 0.0, 0.0, 0.0, grid, lambda_phi);
}

/// Mean of the density proportional to e^{-beta x} on [a, b].
inline double truncated_exponential_mean(double a, double b, double beta) {
  const double width = b - a;
  const double tail = std::exp(-beta * width);
  return a + 1.0 / beta - width * tail / (1.0 - tail);
}

/// What the dynamics and the objective need from one step's policies.
struct PolicySummary {
  double mean_c = 0.0;
  double phi_rms = 0.0;  // sqrt(E[phi^2]): signed-RMS reduction of the diffusion
  double expected_utility = 0.0;
  double expected_phi_cost = 0.0;  // E[phi^2] / 2
  double entropy_c = 0.0;
  double entropy_phi = 0.0;
};

inline PolicySummary summarize(const RelaxedPolicy& saving, const RelaxedPolicy& risk,
                               double gamma) {
  PolicySummary s;
  s.mean_c = saving.mean();
  const double m2 = risk.second_moment();
  s.phi_rms = std::sqrt(m2);
  s.expected_utility = saving.expect([gamma](double c) { return crra_utility(c, gamma); });
  s.expected_phi_cost = 0.5 * m2;
  s.entropy_c = saving.entropy();
  s.entropy_phi = risk.entropy();
  return s;
}

/// Per-group, per-step policy summaries over the whole horizon. Policies are
/// rebuilt on demand (they are deterministic under Z = 0), so only summaries
/// are stored.
struct RelaxedControls {
  double dt = 0.0;
  std::size_t steps = 0;
  std::vector<std::vector<PolicySummary>> summary;  // [group][step]
  std::vector<double> c_grid;
  std::vector<std::vector<double>> phi_grid;  // per group
  double lambda_c = 1.0;
  double lambda_phi = 1.0;
  bool dirac = false;
};

inline std::vector<double> phi_grid_for(const GroupParams& g, std::size_t points) {
  return ActionGrid{g.phi_floor, 1.0, points}.values();
}

inline RelaxedControls build_relaxed_controls(const ScenarioConfig& config) {
  RelaxedControls rc;
  rc.dt = config.dt;
  rc.steps = config.steps();
  rc.lambda_c = config.lambda_c;
  rc.lambda_phi = config.lambda_phi;
  rc.c_grid = config.c_grid.values();
  const double T = config.dt * static_cast<double>(rc.steps);
  for (const auto& g : config.groups) {
    rc.phi_grid.push_back(phi_grid_for(g, config.phi_grid_points));
    const RelaxedPolicy risk = risk_policy(g, rc.phi_grid.back(), config.lambda_phi);
    std::vector<PolicySummary> row;
    row.reserve(rc.steps + 1);
    for (std::size_t i = 0; i <= rc.steps; ++i) {
      const double t = config.dt * static_cast<double>(i);
      row.push_back(summarize(saving_policy(t, g, config.r, T, rc.c_grid, config.lambda_c), risk,
                              g.gamma));
    }
    rc.summary.push_back(std::move(row));
  }
  return rc;
}

/// Single-point policies at the classical controls (c_hat_t, phi_j).
inline RelaxedControls dirac_controls(const ScenarioConfig& config) {
  RelaxedControls rc;
  rc.dt = config.dt;
  rc.steps = config.steps();
  rc.lambda_c = config.lambda_c;
  rc.lambda_phi = config.lambda_phi;
  rc.dirac = true;
  const double T = config.dt * static_cast<double>(rc.steps);
  for (const auto& g : config.groups) {
    rc.phi_grid.push_back({g.phi});
    std::vector<PolicySummary> row;
    row.reserve(rc.steps + 1);
    for (std::size_t i = 0; i <= rc.steps; ++i) {
      const double t = config.dt * static_cast<double>(i);
      row.push_back(summarize(dirac_policy(optimal_consumption(t, g, config.r, T)),
                              dirac_policy(g.phi), g.gamma));
    }
    rc.summary.push_back(std::move(row));
  }
  return rc;
}

/// Representative wealth under relaxed controls: drift at the policy-mean
/// consumption (b^w is affine in c), market loading at sqrt(E[phi^2]).
inline AgentPaths simulate_relaxed_wealth(const ScenarioConfig& config,
                                          const RelaxedControls& controls, const NoiseBundle& noise,
                                          const PricePath& price, const MeanFieldPath& mf) {
  if (controls.steps != price.steps() || controls.summary.size() != config.group_count()) {
    throw std::invalid_argument("relaxed controls do not match the simulation grid");
  }
  return simulate_representative_controlled(
      config, noise, price, mf, [&](std::size_t j, std::size_t i, double) {
        const auto& s = controls.summary[j][i];
        return StepControls{s.mean_c, s.phi_rms};
      });
}

struct RelaxedObjective {
  double utility = 0.0;        // int e^{-rho t} E[U(c)] dt
  double risk_cost = 0.0;      // int e^{-rho t} E[phi^2]/2 dt
  double entropy_c = 0.0;      // int e^{-rho t} lambda_c H(pi_c) dt
  double entropy_phi = 0.0;    // int e^{-rho t} lambda_phi H(pi_phi) dt
  double terminal_wealth = 0.0;
  double total = 0.0;
};

/// Entropy-regularized payoff per group on the simulated representative path.
/// Entropies are the discrete-grid values; a Dirac policy contributes zero
/// where the continuum value would diverge to -infinity.
inline std::vector<RelaxedObjective> relaxed_objective(const AgentPaths& paths,
                                                       const RelaxedControls& controls,
                                                       const ScenarioConfig& config) {
  std::vector<RelaxedObjective> out;
  const double dt = controls.dt;
  const auto last = static_cast<Eigen::Index>(controls.steps);
  for (std::size_t j = 0; j < config.group_count(); ++j) {
    const auto& g = config.groups[j];
    std::vector<double> fu(controls.steps + 1), fr(fu.size()), fc(fu.size()), fp(fu.size());
    for (std::size_t i = 0; i <= controls.steps; ++i) {
      const double disc = std::exp(-g.rho * dt * static_cast<double>(i));
      const auto& s = controls.summary[j][i];
      fu[i] = disc * s.expected_utility;
      fr[i] = disc * s.expected_phi_cost;
      fc[i] = disc * controls.lambda_c * s.entropy_c;
      fp[i] = disc * controls.lambda_phi * s.entropy_phi;
    }
    RelaxedObjective o;
    o.utility = detail::trapezoid(fu, dt);
    o.risk_cost = detail::trapezoid(fr, dt);
    o.entropy_c = detail::trapezoid(fc, dt);
    o.entropy_phi = detail::trapezoid(fp, dt);
    o.terminal_wealth = paths.w_mean(last, static_cast<Eigen::Index>(j));
    o.total = o.utility - o.risk_cost + o.entropy_c + o.entropy_phi + o.terminal_wealth;
    out.push_back(o);
  }
  return out;
}

}  // namespace mfg
