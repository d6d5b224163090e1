#include "pzero/limits.hpp"
#include "pzero/random.hpp"

#include <doctest.h>

#include <cmath>

using namespace pzero;

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

TEST_CASE("t_max closed form") {
  CHECK(t_max(1000.0, 0.4, 2.5) == doctest::Approx(11.513).epsilon(1e-4));
  CHECK(t_max(100.0, 0.4, 5.0) == doctest::Approx(2.878).epsilon(1e-3));
  CHECK(t_max(1000.0, 0.4, 2.5) == doctest::Approx(std::log(1000.0) / 0.6).epsilon(1e-15));
  CHECK_THROWS_AS(t_max(100.0, 0.4, 1.0), std::domain_error);
  CHECK_THROWS_WITH(t_max(100.0, 0.4, 0.5), doctest::Contains("no epidemic regime"));
  CHECK_THROWS(t_max(1.0, 0.4, 2.0));
  CHECK_THROWS(t_max(100.0, 0.0, 2.0));
}

TEST_CASE("t_max monotonicity on grids") {
  for (double n : {10.0, 100.0, 1000.0})
    for (double g : {0.1, 0.3, 0.5})
      for (double r : {1.5, 2.5, 4.0}) {
        CHECK(t_max(n, g, r + 0.5) < t_max(n, g, r));
        CHECK(t_max(n, g + 0.1, r) < t_max(n, g, r));
        CHECK(t_max(n * 2, g, r) > t_max(n, g, r));
      }
}

TEST_CASE("p_max values") {
  CHECK(p_max(100.0, 0.0) == 1.0);
  CHECK(p_max(0.0, 0.3) == 1.0);
  CHECK(p_max(100.0, 0.1) == doctest::Approx(1.0 / 3 + 2.0 / 3 * std::pow(0.9, 45)).epsilon(1e-14));
  CHECK(p_max(100.0, 0.1) == doctest::Approx(0.3392).epsilon(1e-3));
  // k < 1 clamps the exponent at zero.
  CHECK(p_max(5.0, 0.1) == 1.0);
  CHECK_THROWS(p_max(10.0, 1.5));
  CHECK_THROWS(p_max(-1.0, 0.5));
}

TEST_CASE("p_max monotone and floored") {
  for (double p = 0.01; p < 0.99; p += 0.07)
    for (double gi = 0; gi < 500; gi += 13) {
      const double v = p_max(gi, p);
      CHECK(v >= 1.0 / 3 - 1e-15);
      CHECK(v <= 1.0);
      CHECK(p_max(gi + 13, p) <= v + 1e-15);
      CHECK(p_max(gi, std::min(0.99, p + 0.07)) <= v + 1e-15);
    }
}

TEST_CASE("expected infected subgraph size") {
  const double tm = t_max(1000.0, 0.4, 2.5);
  CHECK(expected_gi_size(1000.0, 0.4, 2.5, tm) == doctest::Approx(500.0));
  // At t = 0 the logistic argument is gamma (R0 - 1) t_max = ln n, so the size is n / (1 + n).
  CHECK(expected_gi_size(1000.0, 0.4, 2.5, 0.0) == doctest::Approx(1000.0 / 1001.0).epsilon(1e-12));
  CHECK(expected_gi_size(1000.0, 0.4, 2.5, 1e4) == doctest::Approx(1000.0));
  CHECK_THROWS(expected_gi_size(1000.0, 0.4, 0.9, 1.0));
}

TEST_CASE("bound curve composition and shape") {
  const double n = 100, p = 2 * std::log(100.0) / 100, gamma = 0.4;
  std::vector<double> grid;
  for (int t = 0; t <= 30; ++t) grid.push_back(t);
  const auto single = bound_curve(n, p, gamma, 2.5, std::vector<double>{0.0});
  CHECK(single.points.size() == 1);
  CHECK(single.points[0].p_max > 0.99);

  std::vector<BoundCurve> curves;
  for (double r0 : {2.5, 5.0, 10.0}) curves.push_back(bound_curve(n, p, gamma, r0, grid));
  for (const auto& c : curves) {
    CHECK(c.t_max == doctest::Approx(t_max(n, gamma, c.r0)));
    for (std::size_t k = 0; k < grid.size(); ++k) {
      CHECK(c.points[k].expected_gi == expected_gi_size(n, gamma, c.r0, grid[k]));
      CHECK(c.points[k].p_max == p_max(c.points[k].expected_gi, p));
      CHECK(c.points[k].p_max >= 1.0 / 3);
      if (k > 0) CHECK(c.points[k].p_max <= c.points[k - 1].p_max);
    }
  }
  // Larger R0 decays sooner.
  for (std::size_t k = 1; k < grid.size(); ++k) {
    CHECK(curves[1].points[k].p_max <= curves[0].points[k].p_max);
    CHECK(curves[2].points[k].p_max <= curves[1].points[k].p_max);
  }
  const std::string rows = curves[0].csv_rows();
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 31);
  CHECK(rows.rfind("2.5,0,", 0) == 0);
}

TEST_CASE("logistic fit: exact input") {
  std::vector<double> t, s;
  for (int k = 0; k <= 40; ++k) {
    t.push_back(k);
    s.push_back(sigmoid(0.6 * (11.5 - k)));
  }
  const auto fit = fit_logistic(t, s);
  CHECK(fit.rate == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(fit.midpoint == doctest::Approx(11.5).epsilon(1e-6));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("logistic fit: scaled and noisy input") {
  Rng rng(9);
  std::vector<double> s;
  for (int k = 0; k <= 50; ++k) {
    // Box-Muller normal noise, sigma 0.01.
    const double u1 = std::max(rng.uniform(), 1e-300), u2 = rng.uniform();
    const double z = std::sqrt(-2 * std::log(u1)) * std::cos(2 * M_PI * u2);
    s.push_back(0.1 + 0.8 * sigmoid(0.4 * (20.0 - k)) + 0.01 * z);
  }
  const auto fit = fit_logistic(s);
  CHECK(fit.r_squared > 0.99);
  CHECK(fit.midpoint == doctest::Approx(20.0).epsilon(0.05));
  CHECK(fit.lo == doctest::Approx(0.1).epsilon(0.2));
}

TEST_CASE("logistic fit errors") {
  CHECK_THROWS(fit_logistic(std::vector<double>{1, 2, 3, 4}));
  CHECK_THROWS(fit_logistic(std::vector<double>(10, 0.5)));
}

TEST_CASE("limits are templated on the scalar") {
  CHECK(t_max(1000.0f, 0.4f, 2.5f) == doctest::Approx(11.513f).epsilon(1e-4));
  CHECK(p_max(100.0L, 0.1L) == doctest::Approx(0.3392).epsilon(1e-3));
}
