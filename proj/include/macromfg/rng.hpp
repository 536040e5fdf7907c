#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mfg {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Named random streams inside one Monte-Carlo path.
enum class Stream : std::uint64_t {
  Common = 0,     // W increments
  GroupIdio = 1,  // group-level residual of B^j
  AgentIdio = 2,  // per-agent residual of B^i
  Sampling = 3,   // policy sampling
};

/// Seed of `stream` for Monte-Carlo path `path`. Distinct (seed, path, stream)
/// triples give statistically independent mt19937_64 streams.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t path,
                                    Stream stream) noexcept {
  const auto s = static_cast<std::uint64_t>(stream);
  return splitmix64(splitmix64(splitmix64(seed) ^ path) + s * 0x632be59bd9b4e019ULL);
}

/// Reproducible uniform/normal source. The normal transform is implemented
/// here (Marsaglia polar) rather than via std::normal_distribution so that
/// draws are identical across standard-library implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u = 0.0, v = 0.0, s = 0.0;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mfg
