#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "affordkit/image.hpp"
#include "affordkit/mask.hpp"
#include "affordkit/points.hpp"
#include "affordkit/rng.hpp"

namespace affordkit {

enum class Relation { LeftOf, RightOf, InFrontOf, Behind, Between, NextTo, OnTopOf };
enum class SourceTag { FreeSpaceReference, ObjectReference };

inline constexpr Relation kAllRelations[] = {Relation::LeftOf,  Relation::RightOf, Relation::InFrontOf,
                                             Relation::Behind,  Relation::Between, Relation::NextTo,
                                             Relation::OnTopOf};

std::string_view to_string(Relation r);
Relation relation_from_string(std::string_view s);
std::string_view to_string(SourceTag t);
SourceTag source_tag_from_string(std::string_view s);

/// Pixel rectangle [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  friend bool operator==(const Box&, const Box&) = default;
};

struct SceneObject {
  std::string id;
  std::string label;  // "<color> <shape>"
  Box bbox;
  Rgb color{};

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneRecord {
  std::string id;
  std::string image;  // path relative to the manifest directory
  std::string instruction;
  Relation relation = Relation::LeftOf;
  std::vector<std::string> reference_ids;
  std::vector<std::string> reference_labels;
  std::vector<SceneObject> objects;
  MaskImage mask;
  PointSet gt_points;
  SourceTag source_tag = SourceTag::FreeSpaceReference;
  bool holdout = false;

  int width() const { return mask.width(); }
  int height() const { return mask.height(); }
  const SceneObject* object(std::string_view id) const;

  friend bool operator==(const SceneRecord&, const SceneRecord&) = default;
};

struct SceneConfig {
  int width = 128;
  int height = 96;
  int min_objects = 2;
  int max_objects = 5;
  int min_object_size = 10;
  int max_object_size = 30;
  int object_gap = 2;       // minimum free pixels between objects
  int near_radius = 8;      // NextTo reach, in pixels
  int points_per_record = 10;
  int max_retries = 64;     // whole-scene redraws before Unsatisfiable
  std::map<Relation, double> relation_weights = {
      {Relation::LeftOf, 1.0},  {Relation::RightOf, 1.0}, {Relation::InFrontOf, 1.0}, {Relation::Behind, 1.0},
      {Relation::Between, 1.0}, {Relation::NextTo, 1.0},  {Relation::OnTopOf, 1.0}};
  std::set<Relation> holdout_relations;

  void validate() const;
};

/// Region satisfying `relation` relative to the reference object(s), minus
/// every object's footprint (the reference's own footprint is the region for
/// OnTopOf, so only the other objects are removed there).
MaskImage relation_mask(Relation relation, const std::vector<SceneObject>& objects,
                        const std::vector<std::size_t>& reference_indices, int width, int height,
                        int near_radius);

/// k pixel centers drawn uniformly with replacement from the inside pixels.
PointSet sample_points(const MaskImage& mask, int k, std::uint64_t seed);

/// Deterministic in (seed, config). Throws Unsatisfiable after
/// config.max_retries empty-region draws.
SceneRecord generate_scene(std::uint64_t seed, const SceneConfig& config, std::string id = {});

/// Renders the tabletop raster for a record (objects as filled rectangles).
Image render_scene(const SceneRecord& record);

struct ManifestMetadata {
  std::size_t n_records = 0;
  double mean_area_fraction = 0.0;
  std::vector<double> area_fractions;
  std::map<std::string, std::size_t> relation_counts;
};

ManifestMetadata compute_metadata(const std::vector<SceneRecord>& records);

struct Benchmark {
  std::vector<SceneRecord> main;
  std::vector<SceneRecord> holdout;
};

/// Main split draws only non-holdout relations; the holdout split only the
/// holdout ones. n_holdout < 0 means ceil(0.3 * n_scenes) when a holdout set is
/// given, else 0.
Benchmark build_benchmark(std::size_t n_scenes, const std::set<Relation>& holdout_relations, std::uint64_t seed,
                          const SceneConfig& config = {}, long n_holdout = -1);

/// OpenMP-parallel generation of scenes seeded mix_seed(seed, i).
std::vector<SceneRecord> generate_batch(std::size_t n, std::uint64_t seed, const SceneConfig& config,
                                        std::string_view id_prefix);
/// Serial reference for generate_batch.
std::vector<SceneRecord> generate_batch_serial(std::size_t n, std::uint64_t seed, const SceneConfig& config,
                                               std::string_view id_prefix);

}  // namespace affordkit
