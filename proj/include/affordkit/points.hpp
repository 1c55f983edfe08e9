#pragma once

#include <string>
#include <vector>

namespace affordkit {

/// Normalized image coordinate: x is a fraction of image width, y of height.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Ordered list of normalized points. `parsed == false` marks the explicit
/// "nothing could be extracted" state; a parsed set may still be empty.
struct PointSet {
  std::vector<Point> points;
  bool parsed = true;

  static PointSet unparsed() { return PointSet{{}, false}; }

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  friend bool operator==(const PointSet&, const PointSet&) = default;
};

/// "[(0.500, 0.250), ...]" with three decimals; the canonical emitted form.
std::string format_point_list(const std::vector<Point>& points);

}  // namespace affordkit
