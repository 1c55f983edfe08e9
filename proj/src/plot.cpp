#include "affordkit/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace affordkit {

namespace {

constexpr Rgb kPalette[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189}};

}  // namespace

Image render_trend_plot(const std::vector<stats::AblationSeries>& series, const std::vector<stats::AblationRow>& rows,
                        int width, int height) {
  Image img(width, height, 3, 255);
  const int left = 50, right = width - 20, top = 20, bottom = height - 40;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) lo = std::min(lo, y), hi = std::max(hi, y);
  for (const auto& r : rows)
    for (double x : {0.0, 0.5, 1.0}) {
      const auto b = r.trend.band(x);
      if (r.trend.band_defined) lo = std::min(lo, b.lower), hi = std::max(hi, b.upper);
    }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad, hi += pad;

  auto px = [&](double x) { return left + x * (right - left); };
  auto py = [&](double y) { return bottom - (y - lo) / (hi - lo) * (bottom - top); };

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Rgb color = kPalette[i % std::size(kPalette)];
    const auto& fit = rows[i].trend;
    if (fit.band_defined) {
      for (int x = left; x <= right; ++x) {
        const auto b = fit.band(static_cast<double>(x - left) / (right - left));
        const int y0 = static_cast<int>(std::lround(py(b.upper))), y1 = static_cast<int>(std::lround(py(b.lower)));
        for (int y = std::max(y0, top); y <= std::min(y1, bottom); ++y) blend_pixel(img, x, y, color, 0.18);
      }
    }
    draw_line(img, px(0.0), py(fit.predict(0.0)), px(1.0), py(fit.predict(1.0)), 2.0, color);
  }
  for (std::size_t i = 0; i < series.size(); ++i)
    for (const auto& [x, y] : series[i].points) fill_circle(img, px(x), py(y), 4.0, kPalette[i % std::size(kPalette)]);

  const Rgb axis = {40, 40, 40};
  draw_line(img, left, bottom, right, bottom, 1.0, axis);
  draw_line(img, left, top, left, bottom, 1.0, axis);
  for (int k = 0; k <= 4; ++k) draw_line(img, px(k / 4.0), bottom, px(k / 4.0), bottom + 5, 1.0, axis);
  return img;
}

}  // namespace affordkit
