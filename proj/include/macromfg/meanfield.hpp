#pragma once

#include "macromfg/config.hpp"
#include "macromfg/linalg.hpp"
#include "macromfg/noise.hpp"
#include "macromfg/price.hpp"

#include <Eigen/LU>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

/// Contiguous storage for one n x n matrix per grid point.
class MatrixSeries {
 public:
  MatrixSeries() = default;
  MatrixSeries(std::size_t count, std::size_t n) : n_(n), data_(count * n * n, 0.0) {}

  std::size_t size() const { return n_ == 0 ? 0 : data_.size() / (n_ * n_); }
  std::size_t dim() const { return n_; }

  Eigen::Map<Matrix> operator[](std::size_t i) {
    const auto n = static_cast<Eigen::Index>(n_);
    return {data_.data() + i * n_ * n_, n, n};
  }
  Eigen::Map<const Matrix> operator[](std::size_t i) const {
    const auto n = static_cast<Eigen::Index>(n_);
    return {data_.data() + i * n_ * n_, n, n};
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Which noise drives the mean-field SDE.
enum class NoiseProjection {
  Full,          // L dB^l + S dW^l, as in the closed-form equilibrium
  CommonOnly,    // S dW^l only: the dB terms dropped
  WConditional,  // dB^j replaced by E[dB^j | W] = p'_j dW, the limit of finite-player group means
};

/// Writes the mean-field coefficient matrix at price q into `out` (resized to n x n).
/// Off-diagonal A_ij = lambda_i alpha_j; diagonal 1 - lambda_i + lambda_i alpha_i - d_i(q).
inline void assemble_A_into(const ScenarioConfig& config, double q, Matrix& out) {
  const std::size_t n = config.group_count();
  out.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& gi = config.groups[i];
    for (std::size_t j = 0; j < n; ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          gi.lambda * config.groups[j].alpha;
    }
    out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) =
        1.0 - gi.lambda + gi.lambda * gi.alpha - drift_coefficient(gi, config.price.kappa, q);
  }
}

inline Matrix assemble_A(const ScenarioConfig& config, double q) {
  Matrix a;
  assemble_A_into(config, q, a);
  return a;
}

/// Diagonal idiosyncratic loading L = diag(sigma_idio).
inline Matrix idiosyncratic_loading(const ScenarioConfig& config) {
  Vector d(static_cast<Eigen::Index>(config.group_count()));
  for (std::size_t j = 0; j < config.group_count(); ++j) {
    d(static_cast<Eigen::Index>(j)) = config.groups[j].sigma_idio;
  }
  return d.asDiagonal();
}

/// Diagonal common-noise loading S = sigma I (zero without aggregate shocks).
inline Matrix common_loading(const ScenarioConfig& config) {
  const auto n = static_cast<Eigen::Index>(config.group_count());
  const double s = config.variant == Variant::NoAggregateShock ? 0.0 : config.sigma_common;
  return Matrix::Identity(n, n) * s;
}

/// max_j |(1 - lambda_j + lambda_j alpha_j) + lambda_j sum_{i != j} alpha_i - 1|.
inline double row_weight_defect(const ScenarioConfig& config) {
  double worst = 0.0;
  for (std::size_t j = 0; j < config.group_count(); ++j) {
    const auto& g = config.groups[j];
    double others = 0.0;
    for (std::size_t i = 0; i < config.group_count(); ++i) {
      if (i != j) others += config.groups[i].alpha;
    }
    worst = std::max(worst, std::abs((1.0 - g.lambda + g.lambda * g.alpha) + g.lambda * others - 1.0));
  }
  return worst;
}

struct FundamentalSolution {
  MatrixSeries v;
  MatrixSeries v_inv;
  double max_residual = 0.0;  // max_t ||v_t v_t^{-1} - I||_inf
  double min_det = 0.0;
};

/// Integrates dv = A(t) v dt, v(0) = I, with classical RK4 on a fixed grid.
/// `coefficient(t, out)` must write A(t) into `out`. The inverse at each grid
/// point comes from an LU solve of v, not from a separate ODE.
template <class CoefficientFn>
FundamentalSolution fundamental_solution(CoefficientFn&& coefficient, std::size_t n, double dt,
                                         std::size_t steps, double residual_tol = 1e-8) {
  const auto dim = static_cast<Eigen::Index>(n);
  FundamentalSolution fs{MatrixSeries(steps + 1, n), MatrixSeries(steps + 1, n), 0.0, 1.0};
  const Matrix identity = Matrix::Identity(dim, dim);
  Matrix v = identity, a(dim, dim), k1(dim, dim), k2(dim, dim), k3(dim, dim), k4(dim, dim),
         tmp(dim, dim), inv(dim, dim), check(dim, dim);
  Eigen::PartialPivLU<Matrix> lu(dim);
  fs.v[0] = identity;
  fs.v_inv[0] = identity;

  for (std::size_t i = 0; i < steps; ++i) {
    const double t = dt * static_cast<double>(i);
    coefficient(t, a);
    k1.noalias() = a * v;
    tmp = v + (0.5 * dt) * k1;
    coefficient(t + 0.5 * dt, a);
    k2.noalias() = a * tmp;
    tmp = v + (0.5 * dt) * k2;
    k3.noalias() = a * tmp;
    tmp = v + dt * k3;
    coefficient(t + dt, a);
    k4.noalias() = a * tmp;
    v += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    lu.compute(v);
    inv = lu.inverse();
    const double det = lu.determinant();
    check.noalias() = v * inv;
    check -= identity;
    const double residual = check.cwiseAbs().rowwise().sum().maxCoeff();
    if (!std::isfinite(residual) || residual >= residual_tol || !(det > 0.0)) {
      throw NumericalError("fundamental solution degenerate at step " + std::to_string(i + 1) +
                           " (det=" + std::to_string(det) +
                           ", residual=" + std::to_string(residual) + "); reduce dt");
    }
    fs.max_residual = std::max(fs.max_residual, residual);
    fs.min_det = std::min(fs.min_det, det);
    fs.v[i + 1] = v;
    fs.v_inv[i + 1] = inv;
  }
  return fs;
}

/// A(t) along a price path. Between grid points q is interpolated
/// geometrically (linear in log q), which RK4 needs at half steps.
inline auto price_coefficient(const ScenarioConfig& config, const PricePath& price) {
  return [&config, &price](double t, Matrix& out) {
    const double x = t / price.dt;
    const auto last = static_cast<double>(price.steps());
    const double clamped = std::clamp(x, 0.0, last);
    auto i = static_cast<std::size_t>(std::floor(clamped));
    if (i >= price.steps()) i = price.steps() == 0 ? 0 : price.steps() - 1;
    double q = price.q[i];
    if (price.steps() > 0) {
      const double frac = clamped - static_cast<double>(i);
      if (frac > 0.0) q = price.q[i] * std::pow(price.q[i + 1] / price.q[i], frac);
    }
    assemble_A_into(config, q, out);
  };
}

inline FundamentalSolution fundamental_solution(const ScenarioConfig& config,
                                                const PricePath& price) {
  return fundamental_solution(price_coefficient(config, price), config.group_count(), price.dt,
                              price.steps());
}

/// Mean-field trajectory m_t with global and relative averages.
struct MeanFieldPath {
  double dt = 0.0;
  Matrix m;         // (steps+1) x n group mean capital
  Vector M_global;  // sum_j alpha_j m_j
  Matrix M_rel;     // (1 - lambda_j) m_j + lambda_j M_global
  MatrixSeries v;   // fundamental solution (closed form only)
  MatrixSeries v_inv;
  double max_inverse_residual = 0.0;
  double min_det = 1.0;

  std::size_t steps() const { return m.rows() == 0 ? 0 : static_cast<std::size_t>(m.rows() - 1); }
  std::size_t groups() const { return static_cast<std::size_t>(m.cols()); }
};

inline void fill_averages(const ScenarioConfig& config, MeanFieldPath& path) {
  const auto rows = path.m.rows();
  const auto n = path.m.cols();
  Vector alpha(n), lambda(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    alpha(j) = config.groups[static_cast<std::size_t>(j)].alpha;
    lambda(j) = config.groups[static_cast<std::size_t>(j)].lambda;
  }
  path.M_global = path.m * alpha;
  path.M_rel.resize(rows, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    path.M_rel.col(j) = (1.0 - lambda(j)) * path.m.col(j) + lambda(j) * path.M_global;
  }
}

namespace detail {

inline void check_grid(const ScenarioConfig& config, const NoiseBundle& noise,
                       const PricePath& price) {
  if (noise.mode != NoiseMode::GroupLevel || noise.series() != config.group_count()) {
    throw std::invalid_argument("mean-field solve needs a group-level noise bundle");
  }
  if (noise.steps() != price.steps() ||
      std::abs(noise.dt - price.dt) > 1e-12 * std::max(1.0, price.dt)) {
    throw std::invalid_argument("noise grid (" + std::to_string(noise.steps()) +
                                " steps) does not match price grid (" +
                                std::to_string(price.steps()) + " steps)");
  }
}

/// Noise increment of the mean-field SDE at step i.
inline void meanfield_increment(const ScenarioConfig& config, const NoiseBundle& noise,
                                std::size_t i, NoiseProjection projection, Vector& out) {
  const std::size_t n = config.group_count();
  const double common =
      config.variant == Variant::NoAggregateShock ? 0.0 : config.sigma_common * noise.dW[i];
  for (std::size_t j = 0; j < n; ++j) {
    const auto& g = config.groups[j];
    double idio = 0.0;
    if (projection == NoiseProjection::Full) {
      idio = noise.dB[j][i];
    } else if (projection == NoiseProjection::WConditional) {
      idio = g.corr_with_market * noise.dW[i];
    }
    out(static_cast<Eigen::Index>(j)) = g.sigma_idio * idio + common;
  }
}

}  // namespace detail

/// Closed-form equilibrium m_t = v_t [m_0 + sum_s v_s^{-1} (L dB_s + S dW_s)]
/// with left-endpoint (Ito) sums on the grid.
inline MeanFieldPath solve_meanfield(const ScenarioConfig& config, const NoiseBundle& noise,
                                     const PricePath& price,
                                     NoiseProjection projection = NoiseProjection::Full) {
  detail::check_grid(config, noise, price);
  const std::size_t steps = price.steps();
  const auto n = static_cast<Eigen::Index>(config.group_count());
  auto fs = fundamental_solution(config, price);

  MeanFieldPath path;
  path.dt = price.dt;
  path.m.resize(static_cast<Eigen::Index>(steps + 1), n);
  Vector acc = Eigen::Map<const Vector>(config.m0.data(), n);
  Vector increment(n), tmp(n);
  path.m.row(0) = acc.transpose();
  for (std::size_t i = 0; i < steps; ++i) {
    detail::meanfield_increment(config, noise, i, projection, increment);
    tmp.noalias() = fs.v_inv[i] * increment;
    acc += tmp;
    tmp.noalias() = fs.v[i + 1] * acc;
    path.m.row(static_cast<Eigen::Index>(i + 1)) = tmp.transpose();
  }
  path.max_inverse_residual = fs.max_residual;
  path.min_det = fs.min_det;
  path.v = std::move(fs.v);
  path.v_inv = std::move(fs.v_inv);
  fill_averages(config, path);
  return path;
}

/// Euler-Maruyama integration of dm = A_t m dt + L dB + S dW on the same
/// increments. Independent check of solve_meanfield; no fundamental solution.
inline MeanFieldPath em_oracle(const ScenarioConfig& config, const NoiseBundle& noise,
                               const PricePath& price,
                               NoiseProjection projection = NoiseProjection::Full) {
  detail::check_grid(config, noise, price);
  const std::size_t steps = price.steps();
  const auto n = static_cast<Eigen::Index>(config.group_count());
  MeanFieldPath path;
  path.dt = price.dt;
  path.m.resize(static_cast<Eigen::Index>(steps + 1), n);
  Vector m = Eigen::Map<const Vector>(config.m0.data(), n);
  Vector increment(n), drift(n);
  Matrix a(n, n);
  path.m.row(0) = m.transpose();
  for (std::size_t i = 0; i < steps; ++i) {
    assemble_A_into(config, price.q[i], a);
    detail::meanfield_increment(config, noise, i, projection, increment);
    drift.noalias() = a * m;
    m += drift * price.dt + increment;
    path.m.row(static_cast<Eigen::Index>(i + 1)) = m.transpose();
  }
  fill_averages(config, path);
  return path;
}

/// max over grid and groups of |a.m - b.m|.
inline double max_abs_gap(const MeanFieldPath& a, const MeanFieldPath& b) {
  if (a.m.rows() != b.m.rows() || a.m.cols() != b.m.cols()) {
    throw std::invalid_argument("mean-field paths have different shapes");
  }
  return (a.m - b.m).cwiseAbs().maxCoeff();
}

}  // namespace mfg
