#pragma once

#include <string>
#include <vector>

#include "affordkit/mask.hpp"
#include "affordkit/points.hpp"

namespace affordkit {

/// Pixel containment under the floor+clamp convention: x = 1.0 maps to the
/// last column. NaN coordinates are never inside.
bool contains(const MaskImage& mask, Point p);

struct ImageScore {
  std::string image_id;
  std::size_t n_points = 0;
  std::size_t n_inside = 0;
  double accuracy = 0.0;
  bool empty_prediction = false;

  friend bool operator==(const ImageScore&, const ImageScore&) = default;
};

ImageScore score_image(const MaskImage& mask, const PointSet& points, std::string image_id = {});

struct RunScores {
  std::string run_id;
  std::vector<ImageScore> images;
};

struct RunMean {
  std::string run_id;
  double mean = 0.0;

  friend bool operator==(const RunMean&, const RunMean&) = default;
};

struct EvalReport {
  std::vector<RunMean> per_run;
  double mean = 0.0;
  double spread = 0.0;  // sample standard deviation over runs
  bool single_run = false;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Mean over images per run, then mean and sample standard deviation over
/// runs. Throws RunMismatch when the runs do not cover the same image ids.
EvalReport aggregate(const std::vector<RunScores>& runs);

/// One scoring job: a mask and the prediction to score against it.
struct ScoreJob {
  const MaskImage* mask = nullptr;
  const PointSet* points = nullptr;
  std::string image_id;
};

/// OpenMP-parallel batch scoring; output order matches `jobs`.
std::vector<ImageScore> score_batch(const std::vector<ScoreJob>& jobs);
/// Serial reference for score_batch.
std::vector<ImageScore> score_batch_serial(const std::vector<ScoreJob>& jobs);

}  // namespace affordkit
