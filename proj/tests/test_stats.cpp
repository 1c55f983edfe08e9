#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "affordkit/error.hpp"
#include "affordkit/rng.hpp"
#include "affordkit/stats.hpp"
#include "support/t_tail_oracle.hpp"

using namespace affordkit;
using namespace affordkit::stats;

namespace {

double normal(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

TEST_CASE("incomplete beta closed forms") {
  for (double x : {0.0, 0.1, 0.37, 0.5, 0.99, 1.0}) {
    CHECK(incomplete_beta(1.0, 1.0, x) == doctest::Approx(x).epsilon(1e-14));
    CHECK(incomplete_beta(3.0, 1.0, x) == doctest::Approx(x * x * x).epsilon(1e-13));
    CHECK(incomplete_beta(1.0, 2.0, x) == doctest::Approx(1.0 - (1.0 - x) * (1.0 - x)).epsilon(1e-13));
  }
  CHECK(incomplete_beta(2.5, 4.0, 0.3) + incomplete_beta(4.0, 2.5, 0.7) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("t tail matches the quadrature oracle") {
  Rng rng = make_rng(31, 0);
  for (int i = 0; i < 40; ++i) {
    const double t = uniform01(rng) * 20.0;
    const double df = 1.0 + uniform01(rng) * 99.0;
    CHECK(std::abs(t_two_sided_p(t, df) - testing::t_two_sided_p_oracle(t, df)) <= 1e-11);
  }
  // df = 1 is Cauchy: p = 1 - 2 atan(t) / pi
  CHECK(t_two_sided_p(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(t_two_sided_p(0.0, 7.0) == 1.0);
}

TEST_CASE("t_critical inverts the tail") {
  for (double df : {1.0, 2.0, 3.0, 10.0, 57.5}) {
    const double tc = t_critical(0.05, df);
    CHECK(t_two_sided_p(tc, df) == doctest::Approx(0.05).epsilon(1e-10));
  }
  CHECK(t_critical(0.05, 1.0) == doctest::Approx(12.706204736).epsilon(1e-8));
  CHECK(t_critical(0.05, 3.0) == doctest::Approx(3.182446305).epsilon(1e-8));
}

TEST_CASE("Welch on raw samples matches the hand computation") {
  // var a = 1, var b = 4, n = 3: se^2 = 1/3 + 4/3 = 5/3, t = -2 / sqrt(5/3)
  // df = (5/3)^2 / ((1/3)^2/2 + (4/3)^2/2) = 50/17
  const std::vector<double> a = {1, 2, 3}, b = {2, 4, 6};
  const TestResult r = t_test(a, b);
  CHECK(r.t == doctest::Approx(-2.0 / std::sqrt(5.0 / 3.0)).epsilon(1e-12));
  CHECK(r.t == doctest::Approx(-1.5492).epsilon(1e-4));
  CHECK(r.df == doctest::Approx(50.0 / 17.0).epsilon(1e-12));
  CHECK(r.variant == TestVariant::WelchFromRaw);
  CHECK(r.p == doctest::Approx(testing::t_two_sided_p_oracle(r.t, r.df)).epsilon(1e-10));
}

TEST_CASE("identical samples give t = 0 and p = 1") {
  const std::vector<double> a = {0.4, 0.5, 0.45};
  const TestResult r = t_test(a, a);
  CHECK(r.t == 0.0);
  CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("swapping arguments negates t only") {
  const std::vector<double> a = {1.2, 3.4, 2.2, 5.1}, b = {0.3, 0.9, 1.7};
  const TestResult ab = t_test(a, b), ba = t_test(b, a);
  CHECK(ab.t == doctest::Approx(-ba.t));
  CHECK(ab.df == doctest::Approx(ba.df));
  CHECK(ab.p == doctest::Approx(ba.p));
}

TEST_CASE("shift and scale invariance") {
  const std::vector<double> a = {1.2, 3.4, 2.2, 5.1}, b = {0.3, 0.9, 1.7};
  const TestResult base = t_test(a, b);
  for (double shift : {-10.0, 0.5, 1000.0})
    for (double scale : {0.01, 1.0, 7.0}) {
      std::vector<double> a2, b2;
      for (double v : a) a2.push_back(v * scale + shift);
      for (double v : b) b2.push_back(v * scale + shift);
      const TestResult r = t_test(a2, b2);
      CHECK(r.t == doctest::Approx(base.t).epsilon(1e-9));
      CHECK(r.df == doctest::Approx(base.df).epsilon(1e-9));
      CHECK(r.p == doctest::Approx(base.p).epsilon(1e-9));
    }
}

TEST_CASE("raw tests need two values per sample") {
  const std::vector<double> one = {1.0}, two = {1.0, 2.0};
  CHECK_THROWS_AS(t_test(one, two), Error);
}

TEST_CASE("zero dispersion is flagged rather than dividing by zero") {
  const SummarySample a{0.5, 0.0, 3}, b{0.5, 0.0, 3}, c{0.6, 0.0, 3};
  const TestResult same = t_test(a, b, TestVariant::WelchFromSummary);
  CHECK(same.degenerate_variance);
  CHECK(same.p == 1.0);
  const TestResult diff = t_test(a, c, TestVariant::WelchFromSummary);
  CHECK(diff.degenerate_variance);
  CHECK(diff.p == 0.0);
}

TEST_CASE("summary Welch under both dispersion readings") {
  const SummarySample se_a{48.1, 0.1, 3, Dispersion::StandardError};
  const SummarySample se_b{43.9, 0.6, 3, Dispersion::StandardError};
  const TestResult se = t_test(se_a, se_b, TestVariant::WelchFromSummary);
  // t = 4.2 / sqrt(0.01 + 0.36); df = 0.37^2 / (0.01^2/2 + 0.36^2/2)
  CHECK(se.t == doctest::Approx(4.2 / std::sqrt(0.37)).epsilon(1e-12));
  CHECK(se.df == doctest::Approx(0.37 * 0.37 / (0.0001 / 2 + 0.1296 / 2)).epsilon(1e-12));
  CHECK(se.p == doctest::Approx(testing::t_two_sided_p_oracle(se.t, se.df)).epsilon(1e-9));
  CHECK(se.p >= 0.015);
  CHECK(se.p <= 0.030);

  const SummarySample sd_a{48.1, 0.1, 3, Dispersion::StandardDeviation};
  const SummarySample sd_b{43.9, 0.6, 3, Dispersion::StandardDeviation};
  const TestResult sd = t_test(sd_a, sd_b, TestVariant::WelchFromSummary);
  CHECK(sd.p < 0.01);

  const auto all = t_test_all_variants(48.1, 0.1, 3, 43.9, 0.6, 3);
  REQUIRE(all.size() == 4);
  CHECK(all[0].label == "welch/se");
  CHECK(all[0].result.p == doctest::Approx(se.p));
}

TEST_CASE("pooled summary test uses n_a + n_b - 2 degrees of freedom") {
  const SummarySample a{10.0, 2.0, 5, Dispersion::StandardDeviation}, b{8.0, 1.0, 4, Dispersion::StandardDeviation};
  const TestResult r = t_test(a, b, TestVariant::PooledFromSummary);
  const double sp2 = (4 * 4.0 + 3 * 1.0) / 7.0;
  CHECK(r.df == 7.0);
  CHECK(r.t == doctest::Approx(2.0 / std::sqrt(sp2 * (1.0 / 5 + 1.0 / 4))).epsilon(1e-12));
}

TEST_CASE("collinear points fit exactly with a zero-width band") {
  const std::vector<std::pair<double, double>> pts = {{0, 1}, {0.25, 1.5}, {0.5, 2}, {1, 3}};
  const TrendFit f = fit_trend(pts);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  for (const auto& [x, y] : pts) {
    const BandPoint b = f.band(x);
    CHECK(b.upper - b.lower == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("band is symmetric and narrowest at the mean of x") {
  const std::vector<std::pair<double, double>> pts = {{0, 1.0}, {0.25, 1.9}, {0.5, 2.2}, {0.75, 3.1}, {1, 2.9}};
  const TrendFit f = fit_trend(pts);
  REQUIRE(f.band_defined);
  double best_width = 1e300, best_x = -1;
  for (int i = 0; i <= 100; ++i) {
    const double x = i / 100.0;
    const BandPoint b = f.band(x);
    CHECK(b.fit - b.lower == doctest::Approx(b.upper - b.fit));
    if (b.upper - b.lower < best_width) best_width = b.upper - b.lower, best_x = x;
  }
  CHECK(best_x == doctest::Approx(f.mean_x));
}

TEST_CASE("fit_trend is equivariant under a shift of y") {
  std::vector<std::pair<double, double>> pts = {{0, 1.0}, {0.25, 1.9}, {0.5, 2.2}, {0.75, 3.1}, {1, 2.9}};
  const TrendFit f = fit_trend(pts);
  for (auto& p : pts) p.second += 12.5;
  const TrendFit g = fit_trend(pts);
  CHECK(g.slope == doctest::Approx(f.slope));
  CHECK(g.intercept == doctest::Approx(f.intercept + 12.5));
  CHECK(g.band(0.3).upper - g.band(0.3).lower == doctest::Approx(f.band(0.3).upper - f.band(0.3).lower));
}

TEST_CASE("equal x values are rejected") {
  const std::vector<std::pair<double, double>> pts = {{0.5, 1.0}, {0.5, 2.0}};
  try {
    fit_trend(pts);
    FAIL("expected DegenerateX");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateX);
  }
}

TEST_CASE("slope interval covers a zero slope at the nominal rate") {
  Rng rng = make_rng(77, 0);
  const std::vector<double> xs = {0.0, 0.25, 0.5, 0.75, 1.0};
  int covered = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    std::vector<std::pair<double, double>> pts;
    for (double x : xs) pts.emplace_back(x, 40.0 + 3.0 * normal(rng));
    const auto [lo, hi] = fit_trend(pts).slope_interval();
    covered += (lo <= 0.0 && 0.0 <= hi) ? 1 : 0;
  }
  CHECK(static_cast<double>(covered) / trials >= 0.93);
  CHECK(static_cast<double>(covered) / trials <= 0.97);
}

TEST_CASE("ablation endpoints give the expected gains") {
  const auto rows = ablation_report({{"RoboRefIt", {{0.0, 40.6}, {1.0, 48.1}}},
                                     {"W2P", {{0.0, 36.1}, {1.0, 43.7}}},
                                     {"W2P(h)", {{0.0, 30.7}, {1.0, 41.2}}}});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].absolute_gain == doctest::Approx(7.5).epsilon(1e-12));
  CHECK(rows[1].absolute_gain == doctest::Approx(7.6).epsilon(1e-12));
  CHECK(rows[2].absolute_gain == doctest::Approx(10.5).epsilon(1e-12));
  CHECK(rows[2].trend.slope == doctest::Approx(10.5).epsilon(1e-12));
  CHECK(std::abs(rows[2].relative_gain_pct - 34.2) <= 0.05);
  for (const auto& r : rows) CHECK(r.positive_slope);
  CHECK_FALSE(rows[0].trend.band_defined);
}

TEST_CASE("ablation needs a zero fraction and two distinct fractions") {
  CHECK_THROWS_AS(ablation_report({{"b", {{0.5, 1.0}, {1.0, 2.0}}}}), Error);
  CHECK_THROWS_AS(ablation_report({{"b", {{0.0, 1.0}}}}), Error);
}

TEST_CASE("ablation CSV carries one row per benchmark") {
  const auto rows = ablation_report({{"a", {{0.0, 10.0}, {0.5, 12.0}, {1.0, 15.0}}}});
  const std::string csv = ablation_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  const std::string band = trend_band_csv(rows, 5);
  CHECK(std::count(band.begin(), band.end(), '\n') == 6);
}
