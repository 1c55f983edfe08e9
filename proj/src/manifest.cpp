#include "affordkit/manifest.hpp"

#include <filesystem>
#include <fmt/format.h>
#include <sstream>

#include "affordkit/error.hpp"

namespace affordkit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string directory_of(const std::string& path) {
  return fs::path(path).parent_path().string();
}

void ensure_directory(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, fmt::format("cannot create {}: {}", dir, ec.message()));
}

void write_text_file(const std::string& path, const std::string& contents) {
  ensure_directory(directory_of(path));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << contents;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json to_json(const SceneRecord& r) {
  json objects = json::array();
  for (const auto& o : r.objects)
    objects.push_back({{"id", o.id},
                       {"label", o.label},
                       {"bbox", {o.bbox.x0, o.bbox.y0, o.bbox.x1, o.bbox.y1}},
                       {"color", {o.color[0], o.color[1], o.color[2]}}});
  json points = json::array();
  for (const auto& p : r.gt_points.points) points.push_back({p.x, p.y});
  return {{"id", r.id},
          {"image", r.image},
          {"width", r.width()},
          {"height", r.height()},
          {"instruction", r.instruction},
          {"relation", to_string(r.relation)},
          {"reference_ids", r.reference_ids},
          {"reference_labels", r.reference_labels},
          {"objects", objects},
          {"mask", {{"width", r.mask.width()}, {"height", r.mask.height()}, {"rle", r.mask.to_rle()}}},
          {"gt_points", points},
          {"source_tag", to_string(r.source_tag)},
          {"holdout", r.holdout},
          {"area_fraction", r.mask.area_fraction()}};
}

SceneRecord scene_from_json(const json& j, const std::string& base_dir) {
  SceneRecord r;
  r.id = j.at("id").get<std::string>();
  r.image = j.value("image", std::string());
  r.instruction = j.at("instruction").get<std::string>();
  r.relation = relation_from_string(j.at("relation").get<std::string>());
  r.reference_ids = j.value("reference_ids", std::vector<std::string>{});
  r.reference_labels = j.value("reference_labels", std::vector<std::string>{});
  if (j.contains("objects")) {
    for (const auto& o : j.at("objects")) {
      SceneObject obj;
      obj.id = o.at("id").get<std::string>();
      obj.label = o.at("label").get<std::string>();
      const auto b = o.at("bbox").get<std::vector<int>>();
      if (b.size() != 4) throw Error(ErrorCode::ParseError, "bbox needs 4 values");
      obj.bbox = {b[0], b[1], b[2], b[3]};
      if (o.contains("color")) {
        const auto c = o.at("color").get<std::vector<int>>();
        if (c.size() == 3)
          obj.color = {static_cast<std::uint8_t>(c[0]), static_cast<std::uint8_t>(c[1]), static_cast<std::uint8_t>(c[2])};
      }
      r.objects.push_back(std::move(obj));
    }
  }
  const json& m = j.at("mask");
  if (m.contains("rle")) {
    const auto counts = m.at("rle").get<std::vector<std::uint32_t>>();
    r.mask = MaskImage::from_rle(m.at("width").get<int>(), m.at("height").get<int>(), counts);
  } else {
    fs::path p = m.at("path").get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
    r.mask = read_mask_png(p.string());
  }
  for (const auto& p : j.value("gt_points", json::array())) r.gt_points.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  r.source_tag = source_tag_from_string(j.value("source_tag", std::string("free_space_reference")));
  r.holdout = j.value("holdout", false);
  return r;
}

json to_json(const ManifestMetadata& meta) {
  return {{"n_records", meta.n_records},
          {"mean_area_fraction", meta.mean_area_fraction},
          {"area_fractions", meta.area_fractions},
          {"relation_counts", meta.relation_counts}};
}

ManifestReader::ManifestReader(const std::string& path) : in_(path), base_dir_(directory_of(path)) {
  if (!in_) throw Error(ErrorCode::IoError, "cannot open manifest " + path);
}

std::optional<SceneRecord> ManifestReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      return scene_from_json(json::parse(line), base_dir_);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, fmt::format("manifest line {}: {}", line_no_, e.what()));
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("manifest line {}: {}", line_no_, e.what()));
    }
  }
  return std::nullopt;
}

std::vector<SceneRecord> read_manifest(const std::string& path) {
  ManifestReader reader(path);
  std::vector<SceneRecord> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

void write_manifest(const std::vector<SceneRecord>& records, const std::string& path) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  write_text_file(path, text);
}

void write_split(const std::vector<SceneRecord>& records, const std::string& dir, const std::string& name) {
  ensure_directory(dir);
  write_manifest(records, (fs::path(dir) / (name + ".jsonl")).string());
  write_text_file((fs::path(dir) / (name + ".meta.json")).string(), to_json(compute_metadata(records)).dump(2) + "\n");
  for (const auto& r : records) {
    const fs::path img = fs::path(dir) / r.image;
    ensure_directory(img.parent_path().string());
    write_png(render_scene(r), img.string());
  }
}

}  // namespace affordkit
