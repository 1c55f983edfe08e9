#include "affordkit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fmt/format.h>

#include "affordkit/error.hpp"
#include "affordkit/parallel.hpp"

namespace affordkit {

namespace {

struct NamedColor {
  std::string_view name;
  Rgb rgb;
};

constexpr NamedColor kColors[] = {
    {"red", {200, 40, 40}},    {"green", {50, 160, 60}},   {"blue", {40, 70, 200}},   {"yellow", {230, 200, 40}},
    {"purple", {130, 60, 170}}, {"orange", {240, 130, 30}}, {"white", {240, 240, 240}}, {"black", {30, 30, 30}},
};

constexpr std::string_view kShapes[] = {"box", "book", "mug", "plate", "bowl", "block"};

constexpr Rgb kTable = {196, 170, 135};

struct Template {
  Relation relation;
  std::string_view text;
};

// {0} and {1} are reference labels.
constexpr Template kTemplates[] = {
    {Relation::LeftOf, "Find free space to the left of the {0}."},
    {Relation::LeftOf, "Locate a vacant area on the left side of the {0}."},
    {Relation::RightOf, "Find free space to the right of the {0}."},
    {Relation::RightOf, "Locate a vacant area on the right side of the {0}."},
    {Relation::InFrontOf, "Find free space in front of the {0}."},
    {Relation::InFrontOf, "Point to an empty spot in front of the {0}."},
    {Relation::Behind, "Find free space behind the {0}."},
    {Relation::Behind, "Point to an empty spot behind the {0}."},
    {Relation::Between, "Find the free space between the {0} and the {1}."},
    {Relation::Between, "Locate the vacant area between the {0} and the {1}."},
    {Relation::NextTo, "Find a free spot next to the {0}."},
    {Relation::NextTo, "Point to some empty space right beside the {0}."},
    {Relation::OnTopOf, "Point to a spot on top of the {0} where an item could be placed."},
    {Relation::OnTopOf, "Find a free area on the surface of the {0}."},
};

void fill_box(MaskImage& mask, Box b, bool value) {
  const int x0 = std::max(b.x0, 0), x1 = std::min(b.x1, mask.width());
  const int y0 = std::max(b.y0, 0), y1 = std::min(b.y1, mask.height());
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) mask.set(x, y, value);
}

bool overlaps_with_gap(const Box& a, const Box& b, int gap) {
  return a.x0 < b.x1 + gap && b.x0 < a.x1 + gap && a.y0 < b.y1 + gap && b.y0 < a.y1 + gap;
}

bool separated(const Box& a, const Box& b) {
  return a.x1 <= b.x0 || b.x1 <= a.x0 || a.y1 <= b.y0 || b.y1 <= a.y0;
}

Relation pick_relation(Rng& rng, const SceneConfig& config) {
  double total = 0.0;
  for (const auto& [r, w] : config.relation_weights) total += std::max(w, 0.0);
  double u = uniform01(rng) * total;
  Relation last = Relation::LeftOf;
  for (const auto& [r, w] : config.relation_weights) {
    if (w <= 0.0) continue;
    last = r;
    if (u < w) return r;
    u -= w;
  }
  return last;
}

std::vector<SceneObject> place_objects(Rng& rng, const SceneConfig& config) {
  const int target = uniform_int(rng, config.min_objects, config.max_objects);
  std::vector<SceneObject> objects;
  std::vector<std::size_t> used_labels;
  const std::size_t n_labels = std::size(kColors) * std::size(kShapes);
  for (int attempt = 0; attempt < 200 * target && static_cast<int>(objects.size()) < target; ++attempt) {
    const int w = uniform_int(rng, config.min_object_size, config.max_object_size);
    const int h = uniform_int(rng, config.min_object_size, config.max_object_size);
    if (w > config.width || h > config.height) continue;
    const int x = uniform_int(rng, 0, config.width - w);
    const int y = uniform_int(rng, 0, config.height - h);
    const Box box{x, y, x + w, y + h};
    const bool clash = std::any_of(objects.begin(), objects.end(),
                                   [&](const SceneObject& o) { return overlaps_with_gap(o.bbox, box, config.object_gap); });
    if (clash) continue;
    std::size_t label;
    do {
      label = static_cast<std::size_t>(uniform_index(rng, n_labels));
    } while (std::find(used_labels.begin(), used_labels.end(), label) != used_labels.end());
    used_labels.push_back(label);
    const auto& color = kColors[label % std::size(kColors)];
    const auto shape = kShapes[label / std::size(kColors)];
    objects.push_back({fmt::format("obj{}", objects.size()), fmt::format("{} {}", color.name, shape), box, color.rgb});
  }
  return objects;
}

std::string fill_template(std::string_view tmpl, const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{' && i + 2 < tmpl.size() && tmpl[i + 2] == '}') {
      out += labels.at(static_cast<std::size_t>(tmpl[i + 1] - '0'));
      i += 2;
    } else {
      out.push_back(tmpl[i]);
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::LeftOf: return "left_of";
    case Relation::RightOf: return "right_of";
    case Relation::InFrontOf: return "in_front_of";
    case Relation::Behind: return "behind";
    case Relation::Between: return "between";
    case Relation::NextTo: return "next_to";
    case Relation::OnTopOf: return "on_top_of";
  }
  return "";
}

Relation relation_from_string(std::string_view s) {
  for (Relation r : kAllRelations)
    if (to_string(r) == s) return r;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown relation '{}'", s));
}

std::string_view to_string(SourceTag t) {
  return t == SourceTag::FreeSpaceReference ? "free_space_reference" : "object_reference";
}

SourceTag source_tag_from_string(std::string_view s) {
  if (s == "free_space_reference") return SourceTag::FreeSpaceReference;
  if (s == "object_reference") return SourceTag::ObjectReference;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown source tag '{}'", s));
}

const SceneObject* SceneRecord::object(std::string_view oid) const {
  for (const auto& o : objects)
    if (o.id == oid) return &o;
  return nullptr;
}

void SceneConfig::validate() const {
  std::vector<std::string> problems;
  if (width < 4 || height < 4) problems.push_back("image must be at least 4x4");
  if (min_objects < 1 || max_objects < min_objects) problems.push_back("object count range is empty");
  if (min_object_size < 3 || max_object_size < min_object_size) problems.push_back("object size range is empty");
  if (points_per_record < 1) problems.push_back("points_per_record must be >= 1");
  if (max_retries < 1) problems.push_back("max_retries must be >= 1");
  double total = 0.0;
  for (const auto& [r, w] : relation_weights) {
    if (w < 0.0) problems.push_back(fmt::format("negative weight for {}", to_string(r)));
    total += std::max(w, 0.0);
  }
  if (total <= 0.0) problems.push_back("no relation has positive weight");
  const auto between = relation_weights.find(Relation::Between);
  if (between != relation_weights.end() && between->second > 0.0 && max_objects < 2)
    problems.push_back("Between needs at least 2 objects");
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw Error(ErrorCode::InvalidArgument, msg);
  }
}

MaskImage relation_mask(Relation relation, const std::vector<SceneObject>& objects,
                        const std::vector<std::size_t>& reference_indices, int width, int height,
                        int near_radius) {
  const std::size_t needed = relation == Relation::Between ? 2 : 1;
  if (reference_indices.size() != needed)
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("{} needs {} reference(s)", to_string(relation), needed));
  MaskImage mask(width, height);
  const Box& a = objects.at(reference_indices[0]).bbox;
  switch (relation) {
    case Relation::LeftOf: fill_box(mask, {0, a.y0, a.x0, a.y1}, true); break;
    case Relation::RightOf: fill_box(mask, {a.x1, a.y0, width, a.y1}, true); break;
    case Relation::InFrontOf: fill_box(mask, {a.x0, a.y1, a.x1, height}, true); break;
    case Relation::Behind: fill_box(mask, {a.x0, 0, a.x1, a.y0}, true); break;
    case Relation::NextTo:
      fill_box(mask, {a.x0 - near_radius, a.y0 - near_radius, a.x1 + near_radius, a.y1 + near_radius}, true);
      break;
    case Relation::OnTopOf: fill_box(mask, {a.x0 + 1, a.y0 + 1, a.x1 - 1, a.y1 - 1}, true); break;
    case Relation::Between: {
      const Box& b = objects.at(reference_indices[1]).bbox;
      if (a.x1 <= b.x0 || b.x1 <= a.x0) {
        const Box& left = a.x1 <= b.x0 ? a : b;
        const Box& right = a.x1 <= b.x0 ? b : a;
        fill_box(mask, {left.x1, std::min(a.y0, b.y0), right.x0, std::max(a.y1, b.y1)}, true);
      } else {
        const Box& top = a.y1 <= b.y0 ? a : b;
        const Box& bottom = a.y1 <= b.y0 ? b : a;
        fill_box(mask, {std::min(a.x0, b.x0), top.y1, std::max(a.x1, b.x1), bottom.y0}, true);
      }
      break;
    }
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (relation == Relation::OnTopOf && i == reference_indices[0]) continue;
    fill_box(mask, objects[i].bbox, false);
  }
  return mask;
}

PointSet sample_points(const MaskImage& mask, int k, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  std::vector<std::uint32_t> inside;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.cells()[i]) inside.push_back(static_cast<std::uint32_t>(i));
  if (inside.empty()) throw Error(ErrorCode::EmptyMask, "mask has no inside pixel");
  Rng rng = make_rng(seed, 0x5a3b1e);
  PointSet out;
  out.points.reserve(static_cast<std::size_t>(k));
  const auto w = static_cast<std::uint32_t>(mask.width());
  for (int i = 0; i < k; ++i) {
    const std::uint32_t cell = inside[uniform_index(rng, inside.size())];
    out.points.push_back({(static_cast<double>(cell % w) + 0.5) / mask.width(),
                          (static_cast<double>(cell / w) + 0.5) / mask.height()});
  }
  return out;
}

SceneRecord generate_scene(std::uint64_t seed, const SceneConfig& config, std::string id) {
  config.validate();
  Rng rng = make_rng(seed);
  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    const Relation relation = pick_relation(rng, config);
    std::vector<SceneObject> objects = place_objects(rng, config);
    std::vector<std::size_t> refs;
    if (relation == Relation::Between) {
      if (objects.size() < 2) continue;
      const std::size_t i = uniform_index(rng, objects.size());
      std::size_t j = uniform_index(rng, objects.size() - 1);
      if (j >= i) ++j;
      if (!separated(objects[i].bbox, objects[j].bbox)) continue;
      refs = {i, j};
    } else {
      if (objects.empty()) continue;
      refs = {static_cast<std::size_t>(uniform_index(rng, objects.size()))};
    }
    MaskImage mask = relation_mask(relation, objects, refs, config.width, config.height, config.near_radius);
    if (mask.inside_count() == 0) continue;

    SceneRecord rec;
    rec.id = id.empty() ? fmt::format("scene-{:016x}", seed) : std::move(id);
    rec.image = fmt::format("images/{}.png", rec.id);
    rec.relation = relation;
    for (std::size_t r : refs) {
      rec.reference_ids.push_back(objects[r].id);
      rec.reference_labels.push_back(objects[r].label);
    }
    std::vector<const Template*> choices;
    for (const auto& t : kTemplates)
      if (t.relation == relation) choices.push_back(&t);
    rec.instruction = fill_template(choices[uniform_index(rng, choices.size())]->text, rec.reference_labels);
    rec.gt_points = sample_points(mask, config.points_per_record, rng());
    rec.mask = std::move(mask);
    rec.objects = std::move(objects);
    rec.source_tag = relation == Relation::OnTopOf ? SourceTag::ObjectReference : SourceTag::FreeSpaceReference;
    rec.holdout = config.holdout_relations.contains(relation);
    return rec;
  }
  throw Error(ErrorCode::Unsatisfiable,
              fmt::format("no satisfiable scene for seed {} after {} attempts", seed, config.max_retries));
}

Image render_scene(const SceneRecord& record) {
  Image img(record.width(), record.height(), 3);
  for (int y = 0; y < img.height; ++y) {
    // faint horizontal grain so the table is not a flat fill
    const int grain = (y * 7) % 11 - 5;
    for (int x = 0; x < img.width; ++x) {
      std::uint8_t* px = img.at(x, y);
      for (int c = 0; c < 3; ++c) px[c] = static_cast<std::uint8_t>(std::clamp(kTable[static_cast<std::size_t>(c)] + grain, 0, 255));
    }
  }
  for (const auto& o : record.objects) {
    const Rgb edge = {static_cast<std::uint8_t>(o.color[0] * 3 / 5), static_cast<std::uint8_t>(o.color[1] * 3 / 5),
                      static_cast<std::uint8_t>(o.color[2] * 3 / 5)};
    fill_rect(img, o.bbox.x0, o.bbox.y0, o.bbox.x1, o.bbox.y1, edge);
    fill_rect(img, o.bbox.x0 + 1, o.bbox.y0 + 1, o.bbox.x1 - 1, o.bbox.y1 - 1, o.color);
  }
  return img;
}

ManifestMetadata compute_metadata(const std::vector<SceneRecord>& records) {
  ManifestMetadata meta;
  meta.n_records = records.size();
  double sum = 0.0;
  for (const auto& r : records) {
    const double f = r.mask.area_fraction();
    meta.area_fractions.push_back(f);
    sum += f;
    ++meta.relation_counts[std::string(to_string(r.relation))];
  }
  meta.mean_area_fraction = records.empty() ? 0.0 : sum / static_cast<double>(records.size());
  return meta;
}

std::vector<SceneRecord> generate_batch(std::size_t n, std::uint64_t seed, const SceneConfig& config,
                                        std::string_view id_prefix) {
  config.validate();
  std::vector<SceneRecord> out(n);
  std::vector<std::exception_ptr> errors(n);
  parallel_for(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      out[idx] = generate_scene(mix_seed(seed, idx), config, fmt::format("{}{:05d}", id_prefix, idx));
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<SceneRecord> generate_batch_serial(std::size_t n, std::uint64_t seed, const SceneConfig& config,
                                               std::string_view id_prefix) {
  std::vector<SceneRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(generate_scene(mix_seed(seed, i), config, fmt::format("{}{:05d}", id_prefix, i)));
  return out;
}

Benchmark build_benchmark(std::size_t n_scenes, const std::set<Relation>& holdout_relations, std::uint64_t seed,
                          const SceneConfig& config, long n_holdout) {
  SceneConfig main_cfg = config;
  main_cfg.holdout_relations = holdout_relations;
  for (Relation r : holdout_relations) main_cfg.relation_weights[r] = 0.0;

  Benchmark bench;
  bench.main = generate_batch(n_scenes, mix_seed(seed, 1), main_cfg, "main-");
  if (!holdout_relations.empty()) {
    SceneConfig hold_cfg = config;
    hold_cfg.holdout_relations = holdout_relations;
    hold_cfg.relation_weights.clear();
    for (Relation r : holdout_relations) {
      const auto it = config.relation_weights.find(r);
      hold_cfg.relation_weights[r] = it != config.relation_weights.end() && it->second > 0.0 ? it->second : 1.0;
    }
    const std::size_t count = n_holdout >= 0 ? static_cast<std::size_t>(n_holdout)
                                             : static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(n_scenes)));
    bench.holdout = generate_batch(count, mix_seed(seed, 2), hold_cfg, "holdout-");
  }
  return bench;
}

}  // namespace affordkit
