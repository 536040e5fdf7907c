#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mfg {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y = a + b x.
inline LineFit ols(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("ols: need at least two paired points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("ols: x values are all equal");
  return {sxy / sxx, my - sxy / sxx * mx};
}

/// Slope of log y against log x.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) lx[i] = std::log(x[i]);
  for (std::size_t i = 0; i < y.size(); ++i) ly[i] = std::log(y[i]);
  return ols(lx, ly).slope;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // sample sd / sqrt(n); zero when n < 2
};

inline MeanSe mean_se(std::span<const double> x) {
  MeanSe out;
  if (x.empty()) return out;
  const double n = static_cast<double>(x.size());
  for (double v : x) out.mean += v;
  out.mean /= n;
  if (x.size() < 2) return out;
  double ss = 0.0;
  for (double v : x) ss += (v - out.mean) * (v - out.mean);
  out.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

/// Sample covariances of the increments of a and b over sliding windows of
/// `window` increments (stride 1).
inline std::vector<double> rolling_increment_covariance(std::span<const double> a,
                                                        std::span<const double> b,
                                                        std::size_t window) {
  if (a.size() != b.size()) throw std::invalid_argument("rolling covariance: length mismatch");
  if (window < 2) throw std::invalid_argument("rolling covariance: window must be >= 2");
  std::vector<double> out;
  if (a.size() < window + 1) return out;
  const std::size_t incs = a.size() - 1;
  for (std::size_t s = 0; s + window <= incs; ++s) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = s; i < s + window; ++i) {
      ma += a[i + 1] - a[i];
      mb += b[i + 1] - b[i];
    }
    ma /= static_cast<double>(window);
    mb /= static_cast<double>(window);
    double c = 0.0;
    for (std::size_t i = s; i < s + window; ++i) {
      c += (a[i + 1] - a[i] - ma) * (b[i + 1] - b[i] - mb);
    }
    out.push_back(c / static_cast<double>(window - 1));
  }
  return out;
}

/// Largest peak-to-trough fall, max_t (max_{s<=t} x_s - x_t).
inline double max_drawdown(std::span<const double> x) {
  double peak = -INFINITY, worst = 0.0;
  for (double v : x) {
    peak = std::max(peak, v);
    worst = std::max(worst, peak - v);
  }
  return worst;
}

}  // namespace mfg
