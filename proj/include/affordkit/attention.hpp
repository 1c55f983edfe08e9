#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "affordkit/cor_schema.hpp"
#include "affordkit/image.hpp"

namespace affordkit {

struct AttentionToken {
  std::string text;
  std::size_t start = 0;  // character offsets into the generated text
  std::size_t end = 0;
};

/// Per-token attention over the vision patch lattice, row-major
/// [token][row * cols + col].
struct AttentionDump {
  int version = 1;
  std::vector<AttentionToken> tokens;
  int rows = 24;
  int cols = 24;
  std::vector<float> weights;
  std::string image_ref;

  std::size_t patches() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  const float* row(std::size_t token) const { return weights.data() + token * patches(); }

  /// Throws InvalidArgument on shape mismatch, negative or non-finite weights.
  void validate() const;
};

/// Dump file: one JSON header line, then the float32 little-endian matrix.
AttentionDump read_dump(const std::string& path);
void write_dump(const AttentionDump& dump, const std::string& path);
AttentionDump parse_dump(const std::string& bytes);
std::string serialize_dump(const AttentionDump& dump);

struct StepSegmentation {
  std::vector<std::optional<StepKind>> token_step;
  std::array<std::vector<std::size_t>, 4> step_tokens;  // indexed by StepKind
};

/// Assigns each token to the step whose character span contains the token's
/// midpoint. Throws SpanMismatch when offsets fall outside doc.raw_text.
StepSegmentation segment_tokens(const AttentionDump& dump, const CoRDocument& doc);

enum class StepReduce { Mean, Max };

struct StepHeatmap {
  StepKind kind = StepKind::IdentifyReference;
  int rows = 0;
  int cols = 0;
  std::vector<double> raw;     // per-patch reduction before normalization
  std::vector<double> values;  // min-max normalized into [0, 1]
  bool all_zero = false;
};

/// Per-patch reduction over the given token rows. OpenMP-parallel over
/// patches. Throws EmptyRange for an empty token list.
std::vector<double> reduce_tokens(const AttentionDump& dump, const std::vector<std::size_t>& tokens,
                                  StepReduce mode = StepReduce::Mean);
/// Serial reference for reduce_tokens.
std::vector<double> reduce_tokens_serial(const AttentionDump& dump, const std::vector<std::size_t>& tokens,
                                         StepReduce mode = StepReduce::Mean);

/// Min-max normalization. A constant non-zero field maps to all ones; an
/// identically zero field stays zero and sets `all_zero`.
std::vector<double> normalize_minmax(const std::vector<double>& values, bool* all_zero = nullptr);

StepHeatmap aggregate_step(const AttentionDump& dump, StepKind kind, const std::vector<std::size_t>& tokens,
                           StepReduce mode = StepReduce::Mean);

/// Bilinear resample of a rows x cols grid to width x height, sampling at
/// pixel centers with edge clamping.
std::vector<double> upsample_bilinear(const std::vector<double>& grid, int rows, int cols, int width, int height);

/// Fixed perceptual (inferno-like) colormap, v clamped to [0, 1].
Rgb colormap(double v);

struct OverlayOptions {
  double alpha = 0.45;
  double point_radius = 0.0;  // <= 0 picks max(2, min(W,H)/60)
  Rgb point_color = {0, 255, 255};
};

Image render_overlay(const Image& image, const StepHeatmap& heatmap, const PointSet& points,
                     const OverlayOptions& options = {});
void write_overlay(const Image& image, const StepHeatmap& heatmap, const PointSet& points, const std::string& path,
                   const OverlayOptions& options = {});

}  // namespace affordkit
