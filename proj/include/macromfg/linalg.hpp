#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace mfg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a numerical procedure cannot continue (singular propagator,
/// non-finite state, ...). The CLI maps it to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lower-triangular L with L * L^T == c for a symmetric positive
/// semidefinite c. Zero pivots are accepted (e.g. perfectly correlated
/// factors); the corresponding column of L is zero. Returns nullopt when
/// c is not positive semidefinite.
inline std::optional<Matrix> psd_cholesky(const Matrix& c, double tol = 1e-12) {
  const Eigen::Index n = c.rows();
  if (c.cols() != n) return std::nullopt;
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double pivot = c(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (pivot < -tol) return std::nullopt;
    if (pivot <= tol) {
      // Rank-deficient direction: the remaining column must vanish too.
      for (Eigen::Index i = j + 1; i < n; ++i) {
        double s = c(i, j);
        for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        if (std::abs(s) > 1e-9) return std::nullopt;
      }
      continue;
    }
    const double diag = std::sqrt(pivot);
    l(j, j) = diag;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = c(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / diag;
    }
  }
  return l;
}

}  // namespace mfg
