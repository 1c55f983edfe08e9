#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordkit/cor_schema.hpp"
#include "affordkit/endpoint.hpp"
#include "affordkit/image.hpp"
#include "affordkit/scene.hpp"

namespace affordkit {

inline constexpr const char* kDefaultGenerationModel = "gemini-2.5-flash-lite-preview-06-17";

/// Rationale-generation prompt: the four reasoning steps to produce, the
/// instruction verbatim, the reference objects and the ground-truth points the
/// rationale must justify, followed by the required answer format.
std::string compose_prompt(const SceneRecord& record);

enum class RecordKind { Reasoning, Standard };

struct Turn {
  std::string from;  // "human" or "gpt"
  std::string value;
  friend bool operator==(const Turn&, const Turn&) = default;
};

struct TrainingRecord {
  std::string id;
  std::string image;
  RecordKind kind = RecordKind::Standard;
  std::vector<Turn> conversations;

  const std::string& assistant() const { return conversations.at(1).value; }
  friend bool operator==(const TrainingRecord&, const TrainingRecord&) = default;
};

nlohmann::json to_json(const TrainingRecord& r);
TrainingRecord training_record_from_json(const nlohmann::json& j);

struct RejectEntry {
  std::string record_id;
  std::string reason;  // "schema" or "points"
  int attempts = 0;
  friend bool operator==(const RejectEntry&, const RejectEntry&) = default;
};

nlohmann::json to_json(const RejectEntry& r);

struct PipelineStats {
  std::size_t requested = 0;
  std::size_t succeeded = 0;
  std::size_t rejected_schema = 0;
  std::size_t rejected_points = 0;
  std::size_t retried = 0;  // validation re-samples plus transport retries
  double elapsed_seconds = 0.0;
  std::size_t max_in_flight = 0;
};

nlohmann::json to_json(const PipelineStats& s);

struct PipelineConfig {
  std::string model = kDefaultGenerationModel;
  double temperature = 0.7;
  std::size_t concurrency = 4;
  int max_retries = 3;  // fresh re-samples after a schema or point rejection
  RetryPolicy transport;
  std::uint64_t seed = 0;
  RangePolicy range_policy = RangePolicy::Clamp;
  bool attach_image = false;
  std::string image_root;  // resolves SceneRecord::image when attaching
};

/// Human turn for both kinds: "<image>\n" + instruction + answer hint.
std::string human_turn(const SceneRecord& record, RecordKind kind);

/// Direct-answer record: the assistant turn is only the point list.
TrainingRecord make_standard_record(const SceneRecord& record);
std::vector<TrainingRecord> make_standard_records(const std::vector<SceneRecord>& records);

/// Reasoning record validation: complete CoR document whose points all fall
/// inside the mask. Returns the failure reason, or nullopt when valid.
std::optional<std::string> validate_reasoning(const std::string& assistant_text, const MaskImage& mask,
                                              RangePolicy policy = RangePolicy::Clamp);

using RecordSource = std::function<std::optional<SceneRecord>()>;
/// Called on the calling thread in manifest order; exactly one of the two
/// pointers is non-null.
using OutcomeSink = std::function<void(std::size_t index, const TrainingRecord*, const RejectEntry*)>;

/// Streams records through request -> validate -> ordered write with at most
/// config.concurrency requests in flight. Throws EndpointUnreachable when a
/// request exhausts its transport retries or is refused outright.
PipelineStats generate_rationales(const RecordSource& source, Endpoint& endpoint, const PipelineConfig& config,
                                  const OutcomeSink& sink);

struct PipelineResult {
  std::vector<TrainingRecord> records;
  std::vector<RejectEntry> rejects;
  PipelineStats stats;
};

PipelineResult generate_rationales(const std::vector<SceneRecord>& records, Endpoint& endpoint,
                                   const PipelineConfig& config);

struct MixResult {
  std::vector<TrainingRecord> records;
  std::size_t n_reasoning = 0;
  std::size_t n_standard = 0;
};

/// round(ratio * size) reasoning records plus the rest standard, drawn by
/// seeded shuffles and interleaved by a final seeded shuffle. `size` defaults
/// to the largest size both sources can satisfy. Throws InsufficientRecords.
MixResult mix_datasets(const std::vector<TrainingRecord>& reasoning, const std::vector<TrainingRecord>& standard,
                       double ratio, std::optional<std::size_t> size, std::uint64_t seed);

struct AblationSubset {
  double fraction = 0.0;
  std::vector<TrainingRecord> records;  // standard records plus the reasoning prefix
  std::size_t n_reasoning = 0;
};

/// Nested subsets: one seeded permutation of the reasoning records; fraction
/// f keeps its first round(f * N). All standard records go into every file.
std::vector<AblationSubset> ablation_subsets(const std::vector<TrainingRecord>& reasoning,
                                             const std::vector<TrainingRecord>& standard,
                                             const std::vector<double>& fractions, std::uint64_t seed);

struct PaddedImage {
  Image image;
  int offset_x = 0;
  int offset_y = 0;
  int source_width = 0;
  int source_height = 0;

  int side() const { return image.width; }
  Point map_point(Point p) const;
};

/// Centers the image on a max(W,H) square filled with `pad`.
PaddedImage pad_to_square(const Image& image, Rgb pad = {128, 128, 128});
/// Same geometry for a mask; padding is outside.
MaskImage pad_mask_to_square(const MaskImage& mask);
std::vector<Point> map_points(const PaddedImage& padded, const std::vector<Point>& points);

struct LengthItem {
  std::size_t length = 0;
  bool has_image = true;
};

/// Batches of indices: within each modality, sort by length (seeded tie
/// order), cut into batches of `batch_size`, shuffle inside each batch, then
/// shuffle batch order. The two modalities' leftovers share the final
/// batches.
std::vector<std::vector<std::size_t>> group_by_length(const std::vector<LengthItem>& items, std::size_t batch_size,
                                                      std::uint64_t seed);

/// Mean over batches of (max length - min length).
double mean_batch_range(const std::vector<LengthItem>& items, const std::vector<std::vector<std::size_t>>& batches);

void write_training_file(const std::vector<TrainingRecord>& records, const std::string& path);
std::vector<TrainingRecord> read_training_file(const std::string& path);
void write_reject_log(const std::vector<RejectEntry>& rejects, const std::string& path);

}  // namespace affordkit
