#include "affordkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <map>

#include "affordkit/error.hpp"

namespace affordkit::stats {

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

TestResult welch(double mean_a, double se2_a, double n_a, double mean_b, double se2_b, double n_b,
                 TestVariant variant) {
  TestResult r;
  r.variant = variant;
  const double se2 = se2_a + se2_b;
  if (se2 == 0.0) {
    r.degenerate_variance = true;
    r.df = n_a + n_b - 2.0;
    if (mean_a == mean_b) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean_a > mean_b ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = (mean_a - mean_b) / std::sqrt(se2);
  r.df = se2 * se2 / (se2_a * se2_a / (n_a - 1.0) + se2_b * se2_b / (n_b - 1.0));
  r.p = t_two_sided_p(r.t, r.df);
  return r;
}

}  // namespace

double incomplete_beta(double a, double b, double x, double one_minus_x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::InvalidArgument, "incomplete_beta needs a, b > 0");
  if (!(x >= 0.0) || !(x <= 1.0)) throw Error(ErrorCode::InvalidArgument, "incomplete_beta needs x in [0,1]");
  if (x == 0.0) return 0.0;
  if (one_minus_x == 0.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log(one_minus_x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, one_minus_x) / b;
}

double incomplete_beta(double a, double b, double x) { return incomplete_beta(a, b, x, 1.0 - x); }

double t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be > 0");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  const double denom = df + t2;
  return std::clamp(incomplete_beta(df / 2.0, 0.5, df / denom, t2 / denom), 0.0, 1.0);
}

double t_critical(double alpha, double df) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (t_two_sided_p(hi, df) > alpha) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) break;
  }
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (t_two_sided_p(mid, df) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double SummarySample::variance_of_mean() const {
  return kind == Dispersion::StandardError ? dispersion * dispersion : dispersion * dispersion / n;
}

double SummarySample::sample_variance() const {
  return kind == Dispersion::StandardDeviation ? dispersion * dispersion : dispersion * dispersion * n;
}

std::string_view to_string(TestVariant v) {
  switch (v) {
    case TestVariant::WelchFromRaw: return "welch_raw";
    case TestVariant::WelchFromSummary: return "welch_summary";
    case TestVariant::PooledFromSummary: return "pooled_summary";
  }
  return "";
}

TestResult t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw Error(ErrorCode::InvalidArgument, "each sample needs at least 2 values");
  const double ma = mean_of(a), mb = mean_of(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  return welch(ma, variance_of(a, ma) / na, na, mb, variance_of(b, mb) / nb, nb, TestVariant::WelchFromRaw);
}

TestResult t_test(const SummarySample& a, const SummarySample& b, TestVariant variant) {
  for (const auto* s : {&a, &b}) {
    if (s->n < 2) throw Error(ErrorCode::InvalidArgument, "summary samples need n >= 2");
    if (!(s->dispersion >= 0.0)) throw Error(ErrorCode::InvalidArgument, "dispersion must be >= 0");
  }
  const double na = a.n, nb = b.n;
  if (variant == TestVariant::WelchFromSummary)
    return welch(a.mean, a.variance_of_mean(), na, b.mean, b.variance_of_mean(), nb, variant);
  if (variant != TestVariant::PooledFromSummary)
    throw Error(ErrorCode::InvalidArgument, "raw-sample variant needs raw samples");

  TestResult r;
  r.variant = variant;
  r.df = na + nb - 2.0;
  const double pooled = ((na - 1.0) * a.sample_variance() + (nb - 1.0) * b.sample_variance()) / r.df;
  const double se2 = pooled * (1.0 / na + 1.0 / nb);
  if (se2 == 0.0) {
    r.degenerate_variance = true;
    r.t = a.mean == b.mean ? 0.0
                           : (a.mean > b.mean ? std::numeric_limits<double>::infinity()
                                              : -std::numeric_limits<double>::infinity());
    r.p = a.mean == b.mean ? 1.0 : 0.0;
    return r;
  }
  r.t = (a.mean - b.mean) / std::sqrt(se2);
  r.p = t_two_sided_p(r.t, r.df);
  return r;
}

std::vector<NamedTest> t_test_all_variants(double mean_a, double disp_a, int n_a, double mean_b, double disp_b,
                                           int n_b) {
  std::vector<NamedTest> out;
  for (Dispersion kind : {Dispersion::StandardError, Dispersion::StandardDeviation}) {
    const SummarySample a{mean_a, disp_a, n_a, kind}, b{mean_b, disp_b, n_b, kind};
    const std::string reading = kind == Dispersion::StandardError ? "se" : "sd";
    out.push_back({"welch/" + reading, t_test(a, b, TestVariant::WelchFromSummary)});
    out.push_back({"pooled/" + reading, t_test(a, b, TestVariant::PooledFromSummary)});
  }
  return out;
}

BandPoint TrendFit::band(double x) const {
  BandPoint bp{x, predict(x), 0.0, 0.0};
  if (!band_defined) {
    bp.lower = bp.upper = std::numeric_limits<double>::quiet_NaN();
    return bp;
  }
  const double se = residual_se * std::sqrt(1.0 / static_cast<double>(n) + (x - mean_x) * (x - mean_x) / sxx);
  bp.lower = bp.fit - t_crit * se;
  bp.upper = bp.fit + t_crit * se;
  return bp;
}

std::pair<double, double> TrendFit::slope_interval() const {
  if (!band_defined) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  return {slope - t_crit * slope_se, slope + t_crit * slope_se};
}

TrendFit fit_trend(std::span<const std::pair<double, double>> points, double confidence) {
  if (points.size() < 2) throw Error(ErrorCode::DegenerateX, "need at least 2 points");
  TrendFit f;
  f.n = points.size();
  f.confidence = confidence;
  const double n = static_cast<double>(f.n);
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : points) sx += x, sy += y;
  f.mean_x = sx / n;
  const double mean_y = sy / n;
  double sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : points) {
    f.sxx += (x - f.mean_x) * (x - f.mean_x);
    sxy += (x - f.mean_x) * (y - mean_y);
    syy += (y - mean_y) * (y - mean_y);
  }
  if (f.sxx == 0.0) throw Error(ErrorCode::DegenerateX, "all x values are equal");
  f.slope = sxy / f.sxx;
  f.intercept = mean_y - f.slope * f.mean_x;
  double ss_res = 0.0;
  for (const auto& [x, y] : points) {
    const double r = y - f.predict(x);
    ss_res += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  if (f.n > 2) {
    f.band_defined = true;
    f.residual_se = std::sqrt(ss_res / (n - 2.0));
    f.slope_se = f.residual_se / std::sqrt(f.sxx);
    f.t_crit = t_critical(1.0 - confidence, n - 2.0);
  } else {
    f.residual_se = f.slope_se = std::numeric_limits<double>::quiet_NaN();
  }
  return f;
}

std::vector<AblationRow> ablation_report(const std::vector<AblationSeries>& series) {
  std::vector<AblationRow> rows;
  for (const auto& s : series) {
    auto pts = s.points;
    std::stable_sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    if (pts.size() < 2 || pts.front().first != 0.0 || pts.front().first == pts.back().first)
      throw Error(ErrorCode::InvalidArgument,
                  fmt::format("series '{}' needs >= 2 distinct fractions including 0", s.benchmark));
    AblationRow row;
    row.benchmark = s.benchmark;
    row.baseline = pts.front().second;
    row.final = pts.back().second;
    row.absolute_gain = row.final - row.baseline;
    row.relative_gain_pct = row.baseline != 0.0 ? 100.0 * row.absolute_gain / row.baseline
                                                : std::numeric_limits<double>::quiet_NaN();
    row.trend = fit_trend(pts);
    row.positive_slope = row.trend.slope > 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "benchmark,baseline,final,absolute_gain,relative_gain_pct,slope,intercept,slope_se,slope_ci_low,slope_ci_high,r2,"
      "positive_slope\n";
  for (const auto& r : rows) {
    const auto [lo, hi] = r.trend.slope_interval();
    out += fmt::format("{},{:.4f},{:.4f},{:.4f},{:.4f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", r.benchmark,
                       r.baseline, r.final, r.absolute_gain, r.relative_gain_pct, r.trend.slope, r.trend.intercept,
                       r.trend.slope_se, lo, hi, r.trend.r2, r.positive_slope ? 1 : 0);
  }
  return out;
}

std::string trend_band_csv(const std::vector<AblationRow>& rows, int samples) {
  std::string out = "benchmark,x,fit,lower,upper\n";
  for (const auto& r : rows) {
    for (int i = 0; i < samples; ++i) {
      const double x = samples > 1 ? static_cast<double>(i) / (samples - 1) : 0.0;
      const BandPoint b = r.trend.band(x);
      out += fmt::format("{},{:.4f},{:.6f},{:.6f},{:.6f}\n", r.benchmark, b.x, b.fit, b.lower, b.upper);
    }
  }
  return out;
}

}  // namespace affordkit::stats
