#pragma once

#include "macromfg/config.hpp"
#include "macromfg/linalg.hpp"
#include "macromfg/meanfield.hpp"
#include "macromfg/noise.hpp"
#include "macromfg/price.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

/// CRRA utility (c^{1-gamma} - 1) / (1 - gamma).
inline double crra_utility(double c, double gamma) {
  if (!(c > 0.0)) throw std::domain_error("crra_utility: consumption must be > 0");
  return (std::pow(c, 1.0 - gamma) - 1.0) / (1.0 - gamma);
}

/// Deterministic adjoint e^{-r(T-t)}.
inline double adjoint_value(double t, double r, double T) { return std::exp(-r * (T - t)); }

/// e^{-rho t / gamma} y^{-1/gamma} with y the deterministic adjoint.
inline double optimal_consumption(double t, const GroupParams& group, double r, double T) {
  return std::exp(-group.rho * t / group.gamma) * std::exp(r * (T - t) / group.gamma);
}

/// dH/dc = -y + e^{-rho t} c^{-gamma}; vanishes at optimal_consumption.
inline double foc_residual(double c, double t, const GroupParams& group, double r, double T) {
  return -adjoint_value(t, r, T) + std::exp(-group.rho * t) * std::pow(c, -group.gamma);
}

/// The c-dependent part of the Hamiltonian: -y c + e^{-rho t} U(c).
inline double hamiltonian_consumption(double c, double t, const GroupParams& group, double r,
                                      double T) {
  return -adjoint_value(t, r, T) * c + std::exp(-group.rho * t) * crra_utility(c, group.gamma);
}

struct AdjointPath {
  std::vector<double> y;
  double dt = 0.0;
};

/// Closed form on the grid t_i = i dt, i = 0..steps (T = steps dt).
inline AdjointPath adjoint_path(double r, double dt, std::size_t steps) {
  AdjointPath a{std::vector<double>(steps + 1), dt};
  const double T = dt * static_cast<double>(steps);
  for (std::size_t i = 0; i <= steps; ++i) a.y[i] = adjoint_value(dt * static_cast<double>(i), r, T);
  a.y[steps] = 1.0;
  return a;
}

/// Implicit Euler for dY = -rY in time-to-maturity tau = T - t, started from
/// Y = 1 at maturity. First-order accurate against the closed form.
inline AdjointPath adjoint_backward(double r, double dt, std::size_t steps) {
  AdjointPath a{std::vector<double>(steps + 1), dt};
  a.y[steps] = 1.0;
  for (std::size_t i = steps; i > 0; --i) a.y[i - 1] = a.y[i] / (1.0 + r * dt);
  return a;
}

/// Simulated capital, wealth and consumption. Rows are grid points.
struct AgentPaths {
  double dt = 0.0;
  std::vector<std::size_t> group_index;  // agent -> group
  Matrix k, w, c;                        // (steps+1) x agents; empty unless recorded
  Matrix k_mean, w_mean, c_mean;         // (steps+1) x groups
  Vector objective;                      // per agent: int e^{-rho t} U(c) dt + w_T
  std::size_t negative_capital_events = 0;

  std::size_t steps() const {
    return k_mean.rows() == 0 ? 0 : static_cast<std::size_t>(k_mean.rows() - 1);
  }
  std::size_t agents() const { return group_index.size(); }
  bool recorded() const { return k.cols() > 0; }
};

/// Per-step controls of one agent: consumption rate and retained market risk.
struct StepControls {
  double c = 0.0;
  double phi = 0.0;
};

namespace detail {

/// Wealth drift r w + b^k - k q r - c, with
/// b^k = q (khat - d k) + k mu_q q + sigma_q sigma q + p' sigma_q sigma_j q.
inline double wealth_drift(const ScenarioConfig& config, const GroupParams& g, double d, double q,
                           double khat, double k, double w, double c) {
  const double sigma = config.variant == Variant::NoAggregateShock ? 0.0 : config.sigma_common;
  const auto& p = config.price;
  const double bk = q * (khat - d * k) + k * p.mu_q * q + p.sigma_q * sigma * q +
                    g.corr_with_market * p.sigma_q * g.sigma_idio * q;
  return config.r * w + bk - k * q * config.r - c;
}

/// Market-risk loading phi q (k sigma_q + sigma) on dW.
inline double wealth_market_loading(const ScenarioConfig& config, double phi, double q, double k) {
  const double sigma = config.variant == Variant::NoAggregateShock ? 0.0 : config.sigma_common;
  return phi * q * (k * config.price.sigma_q + sigma);
}

inline double common_capital_loading(const ScenarioConfig& config) {
  return config.variant == Variant::NoAggregateShock ? 0.0 : config.sigma_common;
}

inline void check_finite(double k, double w, std::size_t step, std::size_t agent) {
  if (!std::isfinite(k) || !std::isfinite(w)) {
    throw NumericalError("non-finite agent state at step " + std::to_string(step) + ", agent " +
                         std::to_string(agent));
  }
}

inline double trapezoid(const std::vector<double>& f, double dt) {
  if (f.size() < 2) return 0.0;
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return s * dt;
}

/// int_0^T e^{-rho t} U(c_t) dt on the grid for a consumption column.
template <class Column>
double discounted_utility(const Column& c, const GroupParams& g, double dt) {
  std::vector<double> f(static_cast<std::size_t>(c.size()));
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double ci = c(static_cast<Eigen::Index>(i));
    // U(0+) is -inf for gamma > 1 and 1/(gamma - 1) below.
    const double u = ci > 0.0 ? crra_utility(ci, g.gamma)
                     : g.gamma > 1.0 ? -INFINITY
                                     : -1.0 / (1.0 - g.gamma);
    f[i] = std::exp(-g.rho * dt * static_cast<double>(i)) * u;
  }
  return trapezoid(f, dt);
}

}  // namespace detail

struct FinitePlayerOptions {
  bool record_agents = false;
  double consumption_scale = 1.0;
};

/// N-player economy by Euler-Maruyama. Each agent's capital drift uses the
/// empirical relative average (1 - lambda_j) group mean + lambda_j global mean
/// of the current state; the global mean runs over all agents.
inline AgentPaths simulate_finite_players(const ScenarioConfig& config, const NoiseBundle& noise,
                                          const PricePath& price,
                                          const FinitePlayerOptions& options = {}) {
  if (noise.mode != NoiseMode::AgentLevel) {
    throw std::invalid_argument("finite-player simulation needs an agent-level noise bundle");
  }
  if (noise.steps() != price.steps()) {
    throw std::invalid_argument("noise grid does not match price grid");
  }
  const std::size_t n = config.group_count();
  const std::size_t total = noise.series();
  const std::size_t steps = price.steps();
  const double dt = price.dt;
  const double T = dt * static_cast<double>(steps);
  const auto rows = static_cast<Eigen::Index>(steps + 1);
  const auto gn = static_cast<Eigen::Index>(n);

  AgentPaths out;
  out.dt = dt;
  out.group_index = noise.series_group;
  std::vector<std::size_t> count(n, 0);
  for (auto j : out.group_index) ++count[j];
  for (std::size_t j = 0; j < n; ++j) {
    if (count[j] == 0) throw std::invalid_argument("every group needs at least one agent");
  }
  out.k_mean.resize(rows, gn);
  out.w_mean.resize(rows, gn);
  out.c_mean.resize(rows, gn);
  if (options.record_agents) {
    const auto na = static_cast<Eigen::Index>(total);
    out.k.resize(rows, na);
    out.w.resize(rows, na);
    out.c.resize(rows, na);
  }

  std::vector<double> k(total), w(total);
  for (std::size_t a = 0; a < total; ++a) {
    k[a] = config.k0[out.group_index[a]];
    w[a] = config.w0[out.group_index[a]];
  }
  std::vector<double> ksum(n), wsum(n), khat(n), drift(n), cons(n);
  const double common = detail::common_capital_loading(config);

  auto record = [&](std::size_t i) {
    std::fill(ksum.begin(), ksum.end(), 0.0);
    std::fill(wsum.begin(), wsum.end(), 0.0);
    double global = 0.0;
    for (std::size_t a = 0; a < total; ++a) {
      ksum[out.group_index[a]] += k[a];
      wsum[out.group_index[a]] += w[a];
      global += k[a];
      if (k[a] < 0.0) ++out.negative_capital_events;
    }
    global /= static_cast<double>(total);
    const double t = dt * static_cast<double>(i);
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto& g = config.groups[j];
      const double mean = ksum[j] / static_cast<double>(count[j]);
      khat[j] = (1.0 - g.lambda) * mean + g.lambda * global;
      cons[j] = options.consumption_scale * optimal_consumption(t, g, config.r, T);
      out.k_mean(row, static_cast<Eigen::Index>(j)) = mean;
      out.w_mean(row, static_cast<Eigen::Index>(j)) = wsum[j] / static_cast<double>(count[j]);
      out.c_mean(row, static_cast<Eigen::Index>(j)) = cons[j];
    }
    if (options.record_agents) {
      for (std::size_t a = 0; a < total; ++a) {
        const auto col = static_cast<Eigen::Index>(a);
        out.k(row, col) = k[a];
        out.w(row, col) = w[a];
        out.c(row, col) = cons[out.group_index[a]];
      }
    }
  };

  record(0);
  for (std::size_t i = 0; i < steps; ++i) {
    const double q = price.q[i];
    const double dW = noise.dW[i];
    for (std::size_t j = 0; j < n; ++j) {
      drift[j] = drift_coefficient(config.groups[j], config.price.kappa, q);
    }
    for (std::size_t a = 0; a < total; ++a) {
      const std::size_t j = out.group_index[a];
      const auto& g = config.groups[j];
      const double dB = noise.dB[a][i];
      const double kk = k[a];
      const double dw = detail::wealth_drift(config, g, drift[j], q, khat[j], kk, w[a], cons[j]) * dt +
                        q * g.sigma_idio * dB +
                        detail::wealth_market_loading(config, g.phi, q, kk) * dW;
      k[a] = kk + (khat[j] - drift[j] * kk) * dt + g.sigma_idio * dB + common * dW;
      w[a] += dw;
      detail::check_finite(k[a], w[a], i + 1, a);
    }
    record(i + 1);
  }

  out.objective.resize(static_cast<Eigen::Index>(total));
  std::vector<double> utility(n);
  for (std::size_t j = 0; j < n; ++j) {
    utility[j] = detail::discounted_utility(out.c_mean.col(static_cast<Eigen::Index>(j)),
                                            config.groups[j], dt);
  }
  for (std::size_t a = 0; a < total; ++a) {
    out.objective(static_cast<Eigen::Index>(a)) = utility[out.group_index[a]] + w[a];
  }
  return out;
}

/// One representative agent per group driven by the supplied relative
/// averages mf.M_rel and group-level noise. `controls(j, i, t)` returns the
/// consumption and retained-risk fraction used on step i.
template <class ControlFn>
AgentPaths simulate_representative_controlled(const ScenarioConfig& config,
                                              const NoiseBundle& noise, const PricePath& price,
                                              const MeanFieldPath& mf, ControlFn&& controls) {
  if (noise.mode != NoiseMode::GroupLevel || noise.series() != config.group_count()) {
    throw std::invalid_argument("representative simulation needs a group-level noise bundle");
  }
  if (noise.steps() != price.steps() || mf.steps() != price.steps() ||
      mf.groups() != config.group_count()) {
    throw std::invalid_argument("representative simulation: grid mismatch between noise (" +
                                std::to_string(noise.steps()) + "), price (" +
                                std::to_string(price.steps()) + ") and mean field (" +
                                std::to_string(mf.steps()) + ")");
  }
  const std::size_t n = config.group_count();
  const std::size_t steps = price.steps();
  const double dt = price.dt;
  const auto rows = static_cast<Eigen::Index>(steps + 1);
  const auto gn = static_cast<Eigen::Index>(n);
  const double common = detail::common_capital_loading(config);

  AgentPaths out;
  out.dt = dt;
  out.group_index.resize(n);
  for (std::size_t j = 0; j < n; ++j) out.group_index[j] = j;
  out.k_mean.resize(rows, gn);
  out.w_mean.resize(rows, gn);
  out.c_mean.resize(rows, gn);

  for (std::size_t j = 0; j < n; ++j) {
    const auto& g = config.groups[j];
    const auto col = static_cast<Eigen::Index>(j);
    double k = config.k0[j];
    double w = config.w0[j];
    for (std::size_t i = 0;; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double t = dt * static_cast<double>(i);
      const StepControls u = controls(j, i, t);
      out.k_mean(row, col) = k;
      out.w_mean(row, col) = w;
      out.c_mean(row, col) = u.c;
      if (k < 0.0) ++out.negative_capital_events;
      if (i == steps) break;
      const double q = price.q[i];
      const double d = drift_coefficient(g, config.price.kappa, q);
      const double khat = mf.M_rel(row, col);
      const double dB = noise.dB[j][i];
      const double dW = noise.dW[i];
      const double dw = detail::wealth_drift(config, g, d, q, khat, k, w, u.c) * dt +
                        q * g.sigma_idio * dB + detail::wealth_market_loading(config, u.phi, q, k) * dW;
      k += (khat - d * k) * dt + g.sigma_idio * dB + common * dW;
      w += dw;
      detail::check_finite(k, w, i + 1, j);
    }
  }
  out.k = out.k_mean;
  out.w = out.w_mean;
  out.c = out.c_mean;
  out.objective.resize(gn);
  for (std::size_t j = 0; j < n; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    out.objective(col) = detail::discounted_utility(out.c_mean.col(col), config.groups[j], dt) +
                         out.w_mean(rows - 1, col);
  }
  return out;
}

struct RepresentativeOptions {
  double consumption_scale = 1.0;
};

/// Representative agents under the closed-form consumption rule and each
/// group's constant phi.
inline AgentPaths simulate_representative(const ScenarioConfig& config, const NoiseBundle& noise,
                                          const PricePath& price, const MeanFieldPath& mf,
                                          const RepresentativeOptions& options = {}) {
  const double T = price.dt * static_cast<double>(price.steps());
  return simulate_representative_controlled(
      config, noise, price, mf, [&](std::size_t j, std::size_t, double t) {
        const auto& g = config.groups[j];
        return StepControls{options.consumption_scale * optimal_consumption(t, g, config.r, T),
                            g.phi};
      });
}

/// Largest |foc_residual(c_hat)| over every grid point and group.
inline double max_foc_residual(const ScenarioConfig& config) {
  const std::size_t steps = config.steps();
  const double T = config.dt * static_cast<double>(steps);
  double worst = 0.0;
  for (const auto& g : config.groups) {
    for (std::size_t i = 0; i <= steps; ++i) {
      const double t = config.dt * static_cast<double>(i);
      worst = std::max(worst, std::abs(foc_residual(optimal_consumption(t, g, config.r, T), t, g,
                                                    config.r, T)));
    }
  }
  return worst;
}

}  // namespace mfg
