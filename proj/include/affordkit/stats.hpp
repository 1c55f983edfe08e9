#pragma once

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace affordkit::stats {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
/// `one_minus_x` is passed separately so callers can keep full precision
/// near x = 1.
double incomplete_beta(double a, double b, double x, double one_minus_x);
double incomplete_beta(double a, double b, double x);

/// Two-sided Student-t tail probability P(|T| >= |t|) with `df` degrees of
/// freedom (df may be fractional).
double t_two_sided_p(double t, double df);

/// t > 0 such that t_two_sided_p(t, df) == alpha.
double t_critical(double alpha, double df);

enum class Dispersion { StandardDeviation, StandardError };

struct SummarySample {
  double mean = 0.0;
  double dispersion = 0.0;
  int n = 0;
  Dispersion kind = Dispersion::StandardError;

  double variance_of_mean() const;  // squared standard error
  double sample_variance() const;   // squared standard deviation
};

enum class TestVariant { WelchFromRaw, WelchFromSummary, PooledFromSummary };

std::string_view to_string(TestVariant v);

struct TestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  TestVariant variant = TestVariant::WelchFromRaw;
  // Both dispersions are zero; p is 1 when the means are equal, else 0.
  bool degenerate_variance = false;
};

/// Welch test on raw samples (each needs >= 2 values).
TestResult t_test(std::span<const double> a, std::span<const double> b);
/// Summary-statistics test; `variant` must be WelchFromSummary or
/// PooledFromSummary.
TestResult t_test(const SummarySample& a, const SummarySample& b, TestVariant variant);

struct NamedTest {
  std::string label;  // e.g. "welch/se"
  TestResult result;
};

/// Every summary variant under both dispersion readings, side by side.
std::vector<NamedTest> t_test_all_variants(double mean_a, double disp_a, int n_a, double mean_b, double disp_b,
                                           int n_b);

struct BandPoint {
  double x = 0.0;
  double fit = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Ordinary least squares line with a 95% confidence band for the mean
/// response (t quantile at n-2 df).
struct TrendFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
  double residual_se = 0.0;
  double mean_x = 0.0;
  double sxx = 0.0;
  double t_crit = 0.0;
  // False for n == 2: no residual degrees of freedom, so no band.
  bool band_defined = false;
  double confidence = 0.95;

  double predict(double x) const { return intercept + slope * x; }
  BandPoint band(double x) const;
  std::pair<double, double> slope_interval() const;
};

TrendFit fit_trend(std::span<const std::pair<double, double>> points, double confidence = 0.95);

struct AblationSeries {
  std::string benchmark;
  std::vector<std::pair<double, double>> points;  // (fraction, accuracy in percent)
};

struct AblationRow {
  std::string benchmark;
  double baseline = 0.0;  // accuracy at the smallest fraction
  double final = 0.0;     // accuracy at the largest fraction
  double absolute_gain = 0.0;
  double relative_gain_pct = 0.0;
  TrendFit trend;
  bool positive_slope = false;
};

/// One row per series. Each series needs >= 2 distinct fractions including 0.
std::vector<AblationRow> ablation_report(const std::vector<AblationSeries>& series);

std::string ablation_csv(const std::vector<AblationRow>& rows);
/// Line and band samples at `samples` evenly spaced fractions over [0, 1].
std::string trend_band_csv(const std::vector<AblationRow>& rows, int samples = 21);

}  // namespace affordkit::stats
