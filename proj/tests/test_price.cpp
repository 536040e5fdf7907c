#include "macromfg/price.hpp"
#include "macromfg/rng.hpp"
#include "macromfg/stats.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

namespace {

// log(x) = 2 atanh((x - 1) / (x + 1)), summed as a series.
double log_series(double x) {
  const double y = (x - 1.0) / (x + 1.0);
  double term = y, sum = 0.0;
  for (int k = 0; k < 200; ++k) {
    sum += term / (2 * k + 1);
    term *= y * y;
  }
  return 2.0 * sum;
}

mfg::GroupParams investing(double delta) {
  mfg::GroupParams g;
  g.delta = delta;
  g.drift_form = mfg::DriftForm::InvestmentCost;
  return g;
}

}  // namespace

TEST_CASE("deterministic price paths") {
  const std::vector<double> dW(52, 0.0);
  const auto flat = mfg::simulate_price({1.3, 0.0, 0.0, 2.0}, dW, 1.0 / 52);
  for (double q : flat.q) CHECK(q == 1.3);

  const mfg::PriceParams growth{1.0, 0.05, 0.0, 2.0};
  const auto exact = mfg::simulate_price(growth, dW, 1.0 / 52, mfg::PriceScheme::ExactLognormal);
  const auto em = mfg::simulate_price(growth, dW, 1.0 / 52, mfg::PriceScheme::EulerMaruyama);
  CHECK(exact.q.back() == Catch::Approx(std::exp(0.05)).epsilon(1e-14));
  CHECK(em.q.back() == Catch::Approx(std::pow(1.0 + 0.05 / 52, 52)).epsilon(1e-14));

  std::vector<double> fine(5200, 0.0);
  const auto em_fine = mfg::simulate_price(growth, fine, 1.0 / 5200, mfg::PriceScheme::EulerMaruyama);
  CHECK(std::abs(em_fine.q.back() - std::exp(0.05)) < std::abs(em.q.back() - std::exp(0.05)));
}

TEST_CASE("exact scheme matches the lognormal formula") {
  mfg::RandomStream rng(11);
  std::vector<double> dW(100);
  const double dt = 0.01;
  double W = 0.0;
  for (auto& x : dW) {
    x = std::sqrt(dt) * rng.normal();
    W += x;
  }
  const mfg::PriceParams p{2.0, 0.03, 0.25, 1.0};
  const auto path = mfg::simulate_price(p, dW, dt);
  CHECK(path.q.front() == 2.0);
  CHECK(path.q.back() ==
        Catch::Approx(2.0 * std::exp((0.03 - 0.5 * 0.25 * 0.25) * 1.0 + 0.25 * W)).epsilon(1e-12));
}

TEST_CASE("EM strong error shrinks under refinement") {
  const mfg::PriceParams p{1.0, 0.02, 0.15, 2.0};
  const double T = 1.0;
  const std::size_t fine_steps = 512;
  std::vector<double> dts, errs;
  for (std::size_t f : {4, 2, 1}) dts.push_back(T / static_cast<double>(fine_steps / f));
  std::vector<double> sums(3, 0.0);
  for (std::size_t path = 0; path < 400; ++path) {
    mfg::RandomStream rng(mfg::stream_seed(5, path, mfg::Stream::Sampling));
    std::vector<double> dW(fine_steps);
    for (auto& x : dW) x = std::sqrt(T / fine_steps) * rng.normal();
    std::size_t d = 0;
    for (std::size_t f : {4, 2, 1}) {
      std::vector<double> coarse(fine_steps / f, 0.0);
      for (std::size_t i = 0; i < fine_steps; ++i) coarse[i / f] += dW[i];
      const double dt = T / static_cast<double>(coarse.size());
      const double e = mfg::simulate_price(p, coarse, dt, mfg::PriceScheme::EulerMaruyama).q.back() -
                       mfg::simulate_price(p, coarse, dt).q.back();
      sums[d++] += e * e;
    }
  }
  for (auto s : sums) errs.push_back(std::sqrt(s / 400));
  CHECK(errs[0] > errs[1]);
  CHECK(errs[1] > errs[2]);
  CHECK(mfg::loglog_slope(dts, errs) > 0.3);
}

TEST_CASE("EM positivity floor counts clamp events") {
  const mfg::PriceParams p{1.0, 0.0, 2.0, 1.0};
  const std::vector<double> dW = {-1.0, 0.1, -0.9};
  const auto path = mfg::simulate_price(p, dW, 0.01, mfg::PriceScheme::EulerMaruyama);
  CHECK(path.clamp_events == 2);
  CHECK(path.q[1] == Catch::Approx(1e-6));
  for (double q : path.q) CHECK(q > 0.0);
}

TEST_CASE("investment cost values") {
  CHECK(mfg::phi_cost(0.0, 2.0) == 0.0);
  CHECK(mfg::phi_cost(std::exp(1.0) - 1.0, 1.0) == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(mfg::phi_cost(1.0, 2.0) == Catch::Approx(log_series(3.0) / 2.0).epsilon(1e-14));
  CHECK(mfg::phi_cost(1.0, 2.0) == Catch::Approx(0.5493).margin(5e-5));
  CHECK_THROWS_AS(mfg::phi_cost(-0.5, 2.0), std::domain_error);
  CHECK_THROWS_AS(mfg::phi_cost(-1.0, 1.0), std::domain_error);
}

TEST_CASE("investment cost is increasing and concave") {
  const double kappa = 2.0;
  double prev = mfg::phi_cost(0.0, kappa);
  for (int i = 1; i < 200; ++i) {
    const double x = 0.05 * i;
    const double v = mfg::phi_cost(x, kappa);
    CHECK(v > prev);
    prev = v;
    const double second = mfg::phi_cost(x + 0.05, kappa) - 2 * v + mfg::phi_cost(x - 0.05, kappa);
    CHECK(second <= 0.0);
  }
}

TEST_CASE("optimal investment rate") {
  CHECK(mfg::optimal_iota(1.0, 2.0) == 0.0);
  CHECK(mfg::phi_cost(mfg::optimal_iota(1.0, 2.0), 2.0) == 0.0);
  CHECK(mfg::phi_cost(mfg::optimal_iota(std::exp(2.0), 2.0), 2.0) == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(mfg::optimal_iota(1.3, 2.0) == Catch::Approx(0.15).epsilon(1e-15));
  CHECK(mfg::phi_cost(0.15, 2.0) == Catch::Approx(log_series(1.3) / 2.0).epsilon(1e-14));
  CHECK(mfg::phi_cost(0.15, 2.0) == Catch::Approx(0.13118).margin(5e-6));
}

TEST_CASE("q-theory identity holds to rounding") {
  mfg::RandomStream rng(99);
  for (int i = 0; i < 10000; ++i) {
    const double q = std::exp(6.0 * (rng.uniform() - 0.5));
    const double kappa = 0.1 + 5.0 * rng.uniform();
    const double expected = std::log(q) / kappa;
    CHECK(std::abs(mfg::phi_cost(mfg::optimal_iota(q, kappa), kappa) - expected) <=
          1e-14 * std::max(1.0, std::abs(expected)));
  }
}

TEST_CASE("drift coefficient forms") {
  const double kappa = 2.0;
  CHECK(mfg::drift_coefficient(investing(0.3), kappa, std::exp(kappa * 0.3)) ==
        Catch::Approx(0.0).margin(1e-15));
  mfg::GroupParams household;
  household.delta = 0.08;
  household.drift_form = mfg::DriftForm::HouseholdLinear;
  CHECK(mfg::drift_coefficient(household, kappa, 3.7) == Catch::Approx(0.92));
  CHECK(mfg::drift_coefficient(investing(0.05), kappa, 1.0) == Catch::Approx(0.05));
}

TEST_CASE("drift coefficient is continuous through its kink") {
  const auto g = investing(0.4);
  const double kappa = 1.5;
  const double kink = std::exp(kappa * 0.4);
  for (double h : {1e-3, 1e-6, 1e-9}) {
    CHECK(std::abs(mfg::drift_coefficient(g, kappa, kink * (1 + h)) -
                   mfg::drift_coefficient(g, kappa, kink * (1 - h))) < 2 * h);
  }
}
