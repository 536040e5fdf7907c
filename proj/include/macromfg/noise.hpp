#pragma once

#include "macromfg/config.hpp"
#include "macromfg/linalg.hpp"
#include "macromfg/rng.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mfg {

enum class NoiseMode {
  GroupLevel,  // one B^j per group, jointly correlated with W
  AgentLevel,  // one B^i per agent; agents share only the W component
};

/// Pre-generated Brownian increments for one Monte-Carlo path.
///
/// In GroupLevel mode `dB` holds one series per group with
/// corr(dB^j, dW) = p'_j and corr(dB^j, dB^o) = p_{j,o}. In AgentLevel mode it
/// holds one series per agent (grouped contiguously, `series_group` maps
/// series -> group); each agent's series is correlated with dW by p'_j and its
/// residual is independent of every other agent, in its group or not.
struct NoiseBundle {
  std::vector<double> dW;
  std::vector<std::vector<double>> dB;
  std::vector<std::size_t> series_group;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t path = 0;
  NoiseMode mode = NoiseMode::GroupLevel;

  std::size_t steps() const { return dW.size(); }
  std::size_t series() const { return dB.size(); }
};

struct NoiseOptions {
  /// Reuse path 0's common noise for every path (conditional-on-W studies).
  bool frozen_common = false;
};

/// Lower-triangular factor of the (W, B^1..B^n) correlation matrix.
inline Matrix correlation_factor(const ScenarioConfig& config) {
  auto factor = psd_cholesky(correlation_matrix(config));
  if (!factor) throw NumericalError("correlation matrix is not positive semidefinite");
  return *factor;
}

/// Increments for one path, deterministic in (config.seed, mode, path, grid).
/// Both modes draw dW from the same stream, so a GroupLevel and an AgentLevel
/// bundle for the same path share their common noise exactly.
inline NoiseBundle generate_path(const ScenarioConfig& config, NoiseMode mode, std::uint64_t path,
                                 const NoiseOptions& options = {}) {
  const std::size_t steps = config.steps();
  const std::size_t n = config.group_count();
  const double sqrt_dt = std::sqrt(config.dt);

  NoiseBundle b;
  b.dt = config.dt;
  b.seed = config.seed;
  b.path = path;
  b.mode = mode;
  b.dW.resize(steps);

  RandomStream common(stream_seed(config.seed, options.frozen_common ? 0 : path, Stream::Common));
  std::vector<double> z_common(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    z_common[i] = common.normal();
    b.dW[i] = sqrt_dt * z_common[i];
  }

  if (mode == NoiseMode::GroupLevel) {
    const Matrix factor = correlation_factor(config);
    b.dB.assign(n, std::vector<double>(steps));
    b.series_group.resize(n);
    for (std::size_t j = 0; j < n; ++j) b.series_group[j] = j;
    RandomStream idio(stream_seed(config.seed, path, Stream::GroupIdio));
    std::vector<double> z(n + 1);
    for (std::size_t i = 0; i < steps; ++i) {
      z[0] = z_common[i];
      for (std::size_t j = 1; j <= n; ++j) z[j] = idio.normal();
      for (std::size_t j = 0; j < n; ++j) {
        const auto row = static_cast<Eigen::Index>(j + 1);
        double x = 0.0;
        for (Eigen::Index k = 0; k <= row; ++k) x += factor(row, k) * z[static_cast<std::size_t>(k)];
        b.dB[j][i] = sqrt_dt * x;
      }
    }
    return b;
  }

  if (config.n_agents.size() != n) {
    throw std::invalid_argument("agent-level noise needs one n_agents entry per group");
  }
  std::size_t total = 0;
  for (auto count : config.n_agents) total += count;
  b.dB.assign(total, std::vector<double>(steps));
  b.series_group.reserve(total);
  for (std::size_t j = 0; j < n; ++j) {
    b.series_group.insert(b.series_group.end(), config.n_agents[j], j);
  }
  RandomStream idio(stream_seed(config.seed, path, Stream::AgentIdio));
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t a = 0; a < total; ++a) {
      const double p = config.groups[b.series_group[a]].corr_with_market;
      const double residual = std::sqrt(1.0 - p * p);
      b.dB[a][i] = sqrt_dt * (p * z_common[i] + residual * idio.normal());
    }
  }
  return b;
}

inline std::vector<NoiseBundle> generate(const ScenarioConfig& config, NoiseMode mode,
                                         std::size_t n_paths, const NoiseOptions& options = {}) {
  std::vector<NoiseBundle> out;
  out.reserve(n_paths);
  for (std::size_t p = 0; p < n_paths; ++p) out.push_back(generate_path(config, mode, p, options));
  return out;
}

/// Negates every increment; the correlation structure is unchanged.
inline NoiseBundle antithetic(const NoiseBundle& bundle) {
  NoiseBundle out = bundle;
  for (auto& x : out.dW) x = -x;
  for (auto& series : out.dB) {
    for (auto& x : series) x = -x;
  }
  return out;
}

/// Sums consecutive blocks of `factor` increments: the same Brownian path
/// observed on a grid `factor` times coarser.
inline NoiseBundle coarsen(const NoiseBundle& bundle, std::size_t factor) {
  if (factor == 0 || bundle.steps() % factor != 0) {
    throw std::invalid_argument("coarsening factor must divide the number of steps");
  }
  auto sum_blocks = [factor](const std::vector<double>& fine) {
    std::vector<double> coarse(fine.size() / factor, 0.0);
    for (std::size_t i = 0; i < fine.size(); ++i) coarse[i / factor] += fine[i];
    return coarse;
  };
  NoiseBundle out;
  out.dt = bundle.dt * static_cast<double>(factor);
  out.seed = bundle.seed;
  out.path = bundle.path;
  out.mode = bundle.mode;
  out.series_group = bundle.series_group;
  out.dW = sum_blocks(bundle.dW);
  out.dB.reserve(bundle.dB.size());
  for (const auto& series : bundle.dB) out.dB.push_back(sum_blocks(series));
  return out;
}

}  // namespace mfg
