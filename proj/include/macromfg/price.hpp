#pragma once

#include "macromfg/config.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

enum class PriceScheme { ExactLognormal, EulerMaruyama };

/// Capital price on the simulation grid; q[0] = q0.
struct PricePath {
  std::vector<double> q;
  double dt = 0.0;
  std::size_t clamp_events = 0;  // EM steps floored to keep q > 0

  std::size_t steps() const { return q.empty() ? 0 : q.size() - 1; }
};

/// GBM dq = mu q dt + sigma q dW driven by the given increments.
inline PricePath simulate_price(const PriceParams& params, std::span<const double> dW, double dt,
                                PriceScheme scheme = PriceScheme::ExactLognormal) {
  PricePath path;
  path.dt = dt;
  path.q.resize(dW.size() + 1);
  path.q[0] = params.q0;
  const double mu = params.mu_q;
  const double sigma = params.sigma_q;
  if (scheme == PriceScheme::ExactLognormal) {
    const double drift = (mu - 0.5 * sigma * sigma) * dt;
    for (std::size_t i = 0; i < dW.size(); ++i) {
      path.q[i + 1] = path.q[i] * std::exp(drift + sigma * dW[i]);
    }
    return path;
  }
  for (std::size_t i = 0; i < dW.size(); ++i) {
    double next = path.q[i] * (1.0 + mu * dt + sigma * dW[i]);
    if (!(next > 0.0)) {
      next = path.q[i] * 1e-6;
      ++path.clamp_events;
    }
    path.q[i + 1] = next;
  }
  return path;
}

/// Investment cost Phi(x) = log(kappa x + 1) / kappa.
inline double phi_cost(double x, double kappa) {
  const double arg = kappa * x;
  if (!(arg > -1.0)) {
    throw std::domain_error("phi_cost: kappa * x + 1 must be positive (got " +
                            std::to_string(arg + 1.0) + ")");
  }
  return std::log1p(arg) / kappa;
}

/// q-theory investment rate (q - 1) / kappa.
inline double optimal_iota(double q, double kappa) { return (q - 1.0) / kappa; }

/// Diagonal capital drift coefficient of a group at price q.
/// InvestmentCost: |Phi(iota*(q)) - delta| = |log(q)/kappa - delta|;
/// HouseholdLinear: 1 - delta.
inline double drift_coefficient(const GroupParams& group, double kappa, double q) {
  if (group.drift_form == DriftForm::HouseholdLinear) return 1.0 - group.delta;
  return std::abs(std::log(q) / kappa - group.delta);
}

}  // namespace mfg
