#include "macromfg/noise.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

namespace {

// A long single path on a unit grid: steps = horizon.
mfg::ScenarioConfig long_config(std::size_t steps, double p1, double p2, double p3) {
  auto c = mfg::default_two_group();
  c.groups[0].corr_with_market = p1;
  c.groups[1].corr_with_market = p2;
  c.cross_corr = {{1.0, p3}, {p3, 1.0}};
  c.dt = 1.0;
  c.horizon = static_cast<double>(steps);
  return c;
}

double sample_corr(const std::vector<double>& a, const std::vector<double>& b) {
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  sa /= n;
  sb /= n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - sa) * (b[i] - sb);
    saa += (a[i] - sa) * (a[i] - sa);
    sbb += (b[i] - sb) * (b[i] - sb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("random stream is reproducible and seeds split") {
  mfg::RandomStream a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    (void)c;
  }
  CHECK(mfg::stream_seed(1, 0, mfg::Stream::Common) != mfg::stream_seed(1, 1, mfg::Stream::Common));
  CHECK(mfg::stream_seed(1, 0, mfg::Stream::Common) != mfg::stream_seed(1, 0, mfg::Stream::GroupIdio));
  CHECK(mfg::stream_seed(1, 0, mfg::Stream::Common) != mfg::stream_seed(2, 0, mfg::Stream::Common));
}

TEST_CASE("uniforms lie in [0,1) and normals are standard") {
  mfg::RandomStream rng(7);
  const int n = 200000;
  double s = 0, ss = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double z = rng.normal();
    s += z;
    ss += z * z;
  }
  CHECK(std::abs(s / n) < 5.0 / std::sqrt(n));
  CHECK(std::abs(ss / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("bundles are deterministic per seed and path") {
  const auto c = mfg::default_two_group(mfg::Variant::AggregateShock);
  const auto a = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 3);
  const auto b = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 3);
  CHECK(a.dW == b.dW);
  CHECK(a.dB == b.dB);
  const auto other = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 4);
  CHECK(a.dW != other.dW);
  CHECK(a.steps() == c.steps());
  CHECK(a.series() == 2);

  const auto all = mfg::generate(c, mfg::NoiseMode::GroupLevel, 5);
  REQUIRE(all.size() == 5);
  CHECK(all[3].dW == a.dW);
}

TEST_CASE("independent factors decorrelate") {
  const std::size_t n = 100000;
  const auto b = mfg::generate_path(long_config(n, 0, 0, 0), mfg::NoiseMode::GroupLevel, 0);
  const double bound = 5.0 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sample_corr(b.dW, b.dB[0])) < bound);
  CHECK(std::abs(sample_corr(b.dW, b.dB[1])) < bound);
  CHECK(std::abs(sample_corr(b.dB[0], b.dB[1])) < bound);
}

TEST_CASE("market correlation 0.6 is reproduced at 1e6 increments") {
  const auto b = mfg::generate_path(long_config(1000000, 0.6, 0.0, 0.0), mfg::NoiseMode::GroupLevel, 0);
  CHECK(std::abs(sample_corr(b.dB[0], b.dW) - 0.6) < 0.01);
}

TEST_CASE("empirical covariance matches dt times the correlation matrix") {
  const std::size_t n = 100000;
  auto c = mfg::default_four_group();
  c.dt = 0.5;
  c.horizon = 0.5 * static_cast<double>(n);
  const auto b = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 1);
  const auto target = mfg::correlation_matrix(c);
  std::vector<const std::vector<double>*> s = {&b.dW};
  for (const auto& x : b.dB) s.push_back(&x);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double cov = 0.0;
      for (std::size_t k = 0; k < n; ++k) cov += (*s[i])[k] * (*s[j])[k];
      cov /= static_cast<double>(n);
      const double rho = target(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      // sd of a product of unit normals with correlation rho is sqrt(1 + rho^2)
      const double se = c.dt * std::sqrt((1.0 + rho * rho) / static_cast<double>(n));
      INFO(i << "," << j);
      CHECK(std::abs(cov - c.dt * rho) < 5.0 * se);
    }
  }
}

TEST_CASE("agent-level bundles share W and keep residuals independent") {
  auto c = long_config(50000, 0.6, -0.4, -0.6);
  c.n_agents = {3, 2};
  const auto g = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 2);
  const auto a = mfg::generate_path(c, mfg::NoiseMode::AgentLevel, 2);
  CHECK(a.dW == g.dW);
  REQUIRE(a.series() == 5);
  CHECK(a.series_group == std::vector<std::size_t>{0, 0, 0, 1, 1});
  const double bound = 5.0 / std::sqrt(50000.0);
  CHECK(std::abs(sample_corr(a.dB[0], a.dW) - 0.6) < bound);
  CHECK(std::abs(sample_corr(a.dB[4], a.dW) + 0.4) < bound);
  // Within a group, agents share only the W component: corr = p^2.
  CHECK(std::abs(sample_corr(a.dB[0], a.dB[1]) - 0.36) < bound);
  // Across groups the residuals are independent: corr = p1 p2.
  CHECK(std::abs(sample_corr(a.dB[0], a.dB[3]) + 0.24) < bound);
}

TEST_CASE("antithetic is an involution that cancels odd functionals") {
  const auto c = mfg::default_two_group(mfg::Variant::AggregateShock);
  const auto b = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 0);
  const auto anti = mfg::antithetic(b);
  const auto back = mfg::antithetic(anti);
  CHECK(back.dW == b.dW);
  CHECK(back.dB == b.dB);
  // Linear functional: W_T plus a drift; the pair average leaves only the drift.
  const double drift = 0.7;
  double w1 = drift, w2 = drift;
  for (std::size_t i = 0; i < b.steps(); ++i) {
    w1 += b.dW[i];
    w2 += anti.dW[i];
  }
  CHECK(0.5 * (w1 + w2) == Catch::Approx(drift).margin(1e-12));
  CHECK(sample_corr(anti.dB[0], anti.dW) == Catch::Approx(sample_corr(b.dB[0], b.dW)).margin(1e-12));
}

TEST_CASE("coarsening sums blocks of increments") {
  const auto c = mfg::default_two_group();
  const auto b = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 0);
  const auto coarse = mfg::coarsen(b, 4);
  CHECK(coarse.steps() == b.steps() / 4);
  CHECK(coarse.dt == Catch::Approx(4 * b.dt));
  CHECK(coarse.dW[1] == Catch::Approx(b.dW[4] + b.dW[5] + b.dW[6] + b.dW[7]));
  CHECK(coarse.dB[1][0] == Catch::Approx(b.dB[1][0] + b.dB[1][1] + b.dB[1][2] + b.dB[1][3]));
  CHECK_THROWS_AS(mfg::coarsen(b, 3), std::invalid_argument);
}

TEST_CASE("frozen common noise repeats path 0's W") {
  const auto c = mfg::default_two_group(mfg::Variant::AggregateShock);
  const auto a = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 0, {true});
  const auto b = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 5, {true});
  CHECK(a.dW == b.dW);
  CHECK(a.dB != b.dB);
}

TEST_CASE("a non-PSD configuration cannot generate noise") {
  auto c = mfg::default_two_group();
  c.groups[0].corr_with_market = 1.0;
  c.groups[1].corr_with_market = 1.0;
  c.cross_corr = {{1.0, -1.0}, {-1.0, 1.0}};
  CHECK_THROWS_AS(mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 0), mfg::NumericalError);
}
