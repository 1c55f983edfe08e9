#include "affordkit/metric.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <set>

#include "affordkit/error.hpp"
#include "affordkit/parallel.hpp"

namespace affordkit {

namespace {

int cell_index(double coord, int extent) {
  const double scaled = std::floor(coord * extent);
  if (scaled < 0.0) return 0;
  if (scaled > extent - 1) return extent - 1;
  return static_cast<int>(scaled);
}

}  // namespace

bool contains(const MaskImage& mask, Point p) {
  if (std::isnan(p.x) || std::isnan(p.y)) return false;
  return mask.at(cell_index(p.x, mask.width()), cell_index(p.y, mask.height()));
}

ImageScore score_image(const MaskImage& mask, const PointSet& points, std::string image_id) {
  ImageScore s;
  s.image_id = std::move(image_id);
  s.n_points = points.size();
  for (const auto& p : points.points)
    if (contains(mask, p)) ++s.n_inside;
  if (s.n_points == 0) {
    s.empty_prediction = true;
    s.accuracy = 0.0;
  } else {
    s.accuracy = static_cast<double>(s.n_inside) / static_cast<double>(s.n_points);
  }
  return s;
}

EvalReport aggregate(const std::vector<RunScores>& runs) {
  if (runs.empty()) throw Error(ErrorCode::InvalidArgument, "aggregate needs at least one run");
  std::multiset<std::string> reference;
  for (const auto& s : runs.front().images) reference.insert(s.image_id);
  if (reference.empty()) throw Error(ErrorCode::InvalidArgument, "run has no images");

  EvalReport report;
  for (const auto& run : runs) {
    std::multiset<std::string> ids;
    double sum = 0.0;
    for (const auto& s : run.images) {
      ids.insert(s.image_id);
      sum += s.accuracy;
    }
    if (ids != reference)
      throw Error(ErrorCode::RunMismatch, fmt::format("run '{}' covers a different image set", run.run_id));
    report.per_run.push_back({run.run_id, sum / static_cast<double>(run.images.size())});
  }

  const double n = static_cast<double>(report.per_run.size());
  double sum = 0.0;
  for (const auto& r : report.per_run) sum += r.mean;
  report.mean = sum / n;
  if (report.per_run.size() == 1) {
    report.single_run = true;
    report.spread = 0.0;
  } else {
    double ss = 0.0;
    for (const auto& r : report.per_run) ss += (r.mean - report.mean) * (r.mean - report.mean);
    report.spread = std::sqrt(ss / (n - 1.0));
  }
  return report;
}

std::vector<ImageScore> score_batch(const std::vector<ScoreJob>& jobs) {
  std::vector<ImageScore> out(jobs.size());
  parallel_for(static_cast<std::ptrdiff_t>(jobs.size()), [&](std::ptrdiff_t i) {
    const auto& job = jobs[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = score_image(*job.mask, *job.points, job.image_id);
  });
  return out;
}

std::vector<ImageScore> score_batch_serial(const std::vector<ScoreJob>& jobs) {
  std::vector<ImageScore> out;
  out.reserve(jobs.size());
  for (const auto& job : jobs) out.push_back(score_image(*job.mask, *job.points, job.image_id));
  return out;
}

}  // namespace affordkit
