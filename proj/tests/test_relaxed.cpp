#include "macromfg/relaxed.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

namespace {

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  return mfg::ActionGrid{lo, hi, n}.values();
}

}  // namespace

TEST_CASE("saving policies integrate to one") {
  const auto c = mfg::default_two_group(mfg::Variant::BoundedRationality);
  const auto grid = c.c_grid.values();
  for (double lambda : {1e-3, 0.1, 1.0, 10.0}) {
    for (double t : {0.0, 5.0, c.horizon}) {
      const auto p = mfg::saving_policy(t, c.groups[0], c.r, c.horizon, grid, lambda);
      INFO("lambda " << lambda << " t " << t);
      CHECK(std::abs(p.mass() - 1.0) < 1e-12);
      for (double d : p.density()) CHECK(d >= 0.0);
    }
  }
}

TEST_CASE("high temperature flattens the risk policy") {
  mfg::GroupParams g;
  g.phi_floor = 0.2;
  const auto p = mfg::risk_policy(g, uniform_grid(0.2, 1.0, 101), 1e9);
  for (double d : p.density()) CHECK(d == Catch::Approx(1.0 / 0.8).epsilon(1e-8));
  CHECK(p.mean() == Catch::Approx(0.6).epsilon(1e-8));
  CHECK(p.entropy() == Catch::Approx(std::log(0.8)).margin(1e-8));
}

TEST_CASE("uniform density entropy is the log width") {
  const auto grid = uniform_grid(0.5, 2.0, 301);
  const mfg::RelaxedPolicy p(grid, std::vector<double>(grid.size(), 3.0), 1.0);
  CHECK(p.entropy() == Catch::Approx(std::log(1.5)).epsilon(1e-12));
  CHECK(p.normalizer() == Catch::Approx(3.0 + std::log(1.5)).epsilon(1e-12));
}

TEST_CASE("saving policy peaks at the bottom of the grid") {
  const auto c = mfg::default_two_group(mfg::Variant::BoundedRationality);
  const auto grid = c.c_grid.values();
  const auto p = mfg::saving_policy(1.0, c.groups[1], c.r, c.horizon, grid, 0.5);
  CHECK(p.mode() == grid.front());
  // c^{-gamma} is huge at the bottom of the default grid: all mass sits there.
  CHECK(p.mean() == Catch::Approx(grid.front()).epsilon(1e-12));

  // On a grid away from zero, colder policies concentrate on the mode.
  const auto wide = uniform_grid(0.5, 3.0, 501);
  const auto warm = mfg::saving_policy(1.0, c.groups[1], c.r, c.horizon, wide, 5.0);
  const auto cold = mfg::saving_policy(1.0, c.groups[1], c.r, c.horizon, wide, 0.05);
  CHECK(warm.mode() == 0.5);
  CHECK(cold.mean() < warm.mean());
  CHECK(cold.mean() - 0.5 < 0.02);
  CHECK(cold.entropy() < warm.entropy());
}

TEST_CASE("zero-pull risk policy is a truncated exponential") {
  mfg::GroupParams g;
  g.phi_floor = 0.0;
  const auto grid = uniform_grid(0.0, 1.0, 2001);
  const auto p = mfg::risk_policy(g, grid, 1.0);
  // density e^{-phi} / (1 - e^{-1})
  const double z = 1.0 - std::exp(-1.0);
  CHECK(p.density().front() == Catch::Approx(1.0 / z).epsilon(1e-6));
  CHECK(p.density().back() == Catch::Approx(std::exp(-1.0) / z).epsilon(1e-6));
  const double mean = 1.0 - 1.0 / (std::exp(1.0) - 1.0);
  CHECK(mfg::truncated_exponential_mean(0.0, 1.0, 1.0) == Catch::Approx(mean).epsilon(1e-14));
  CHECK(p.mean() == Catch::Approx(mean).epsilon(1e-6));
  CHECK(p.mode() == 0.0);
}

TEST_CASE("sampling reproduces the policy mean") {
  mfg::GroupParams g;
  g.phi_floor = 0.3;
  const auto p = mfg::risk_policy(g, uniform_grid(0.3, 1.0, 200), 0.2);
  mfg::RandomStream rng(mfg::stream_seed(9, 0, mfg::Stream::Sampling));
  const int n = 100000;
  double s = 0, ss = 0;
  for (int i = 0; i < n; ++i) {
    const double x = p.sample(rng);
    REQUIRE(x >= 0.3);
    REQUIRE(x <= 1.0);
    s += x;
    ss += x * x;
  }
  const double mean = s / n;
  const double se = std::sqrt((ss / n - mean * mean) / n);
  CHECK(std::abs(mean - p.mean()) < 4 * se);
  CHECK(std::abs(mean - mfg::truncated_exponential_mean(0.3, 1.0, 5.0)) < 4 * se + 1e-4);
}

TEST_CASE("Dirac policies") {
  const auto d = mfg::dirac_policy(0.7);
  CHECK(d.mass() == 1.0);
  CHECK(d.mean() == 0.7);
  CHECK(d.entropy() == 0.0);
  mfg::RandomStream rng(1);
  CHECK(d.sample(rng) == 0.7);
}

TEST_CASE("Dirac controls reproduce classical wealth exactly") {
  const auto c = mfg::default_two_group(mfg::Variant::BoundedRationality);
  const auto controls = mfg::dirac_controls(c);
  for (std::uint64_t path : {0, 1, 2}) {
    const auto noise = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, path);
    const auto price = mfg::simulate_price(c.price, noise.dW, c.dt);
    const auto mf = mfg::solve_meanfield(c, noise, price);
    const auto relaxed = mfg::simulate_relaxed_wealth(c, controls, noise, price, mf);
    const auto classical = mfg::simulate_representative(c, noise, price, mf);
    CHECK(relaxed.w_mean == classical.w_mean);
    CHECK(relaxed.k_mean == classical.k_mean);
  }
}

TEST_CASE("wealth drift is affine in consumption") {
  const auto c = mfg::default_two_group(mfg::Variant::BoundedRationality);
  const auto& g = c.groups[0];
  const auto p = mfg::saving_policy(2.0, g, c.r, c.horizon, c.c_grid.values(), 0.5);
  auto drift = [&](double cons) {
    return mfg::detail::wealth_drift(c, g, 0.3, 1.1, 0.9, 1.2, 4.0, cons);
  };
  CHECK(p.expect(drift) == Catch::Approx(drift(p.mean())).margin(1e-9));
}

TEST_CASE("built controls summarize each step") {
  auto c = mfg::default_two_group(mfg::Variant::BoundedRationality);
  c.horizon = 1.0;
  c.c_grid.points = 64;
  c.phi_grid_points = 32;
  const auto rc = mfg::build_relaxed_controls(c);
  REQUIRE(rc.summary.size() == 2);
  REQUIRE(rc.summary[0].size() == c.steps() + 1);
  CHECK(rc.phi_grid[0].front() == c.groups[0].phi_floor);
  CHECK(rc.phi_grid[0].back() == 1.0);
  for (const auto& row : rc.summary) {
    for (const auto& s : row) {
      CHECK(s.mean_c >= c.c_grid.lo);
      CHECK(s.mean_c <= c.c_grid.hi);
      CHECK(s.phi_rms * s.phi_rms == Catch::Approx(2 * s.expected_phi_cost));
    }
  }
}

TEST_CASE("constant half retention costs its discounted integral") {
  auto c = mfg::default_two_group(mfg::Variant::BoundedRationality);
  c.groups[0].phi = 0.5;
  c.groups[1].phi = 0.5;
  const auto controls = mfg::dirac_controls(c);
  const auto noise = mfg::generate_path(c, mfg::NoiseMode::GroupLevel, 0);
  const auto price = mfg::simulate_price(c.price, noise.dW, c.dt);
  const auto mf = mfg::solve_meanfield(c, noise, price);
  const auto paths = mfg::simulate_relaxed_wealth(c, controls, noise, price, mf);
  const auto obj = mfg::relaxed_objective(paths, controls, c);
  for (std::size_t j = 0; j < 2; ++j) {
    const double rho = c.groups[j].rho;
    CHECK(obj[j].risk_cost == Catch::Approx(0.125 * (1 - std::exp(-rho * c.horizon)) / rho).epsilon(1e-6));
    CHECK(obj[j].entropy_c == 0.0);
    CHECK(obj[j].terminal_wealth == paths.w_mean(paths.w_mean.rows() - 1, static_cast<Eigen::Index>(j)));
    CHECK(obj[j].total == Catch::Approx(obj[j].utility - obj[j].risk_cost + obj[j].terminal_wealth));
  }
}

TEST_CASE("malformed policies are rejected") {
  CHECK_THROWS_AS(mfg::RelaxedPolicy({}, {}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mfg::RelaxedPolicy({0.0, 1.0}, {0.0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mfg::RelaxedPolicy({1.0, 0.5}, {0.0, 0.0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mfg::RelaxedPolicy({0.0, 1.0}, {0.0, NAN}, 1.0), std::invalid_argument);
  mfg::GroupParams g;
  g.phi_floor = 0.5;
  CHECK_THROWS_AS(mfg::risk_policy(g, {0.0, 1.0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mfg::risk_policy(g, {0.5, 1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mfg::saving_policy(0, g, 0.02, 1, {0.0, 1.0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(mfg::saving_policy(0, g, 0.02, 1, {0.5, 1.0}, -1.0), std::invalid_argument);
}
