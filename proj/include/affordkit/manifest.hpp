#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordkit/scene.hpp"

namespace affordkit {

/// One manifest line. The mask is written inline as RLE.
nlohmann::json to_json(const SceneRecord& record);
/// Accepts an inline RLE mask ({"width","height","rle"}) or a PNG path
/// ({"path"}) resolved against `base_dir`.
SceneRecord scene_from_json(const nlohmann::json& j, const std::string& base_dir = {});

nlohmann::json to_json(const ManifestMetadata& meta);

/// Streams a line-delimited manifest one record at a time; blank lines are
/// skipped. Parse failures throw ParseError naming the line number.
class ManifestReader {
 public:
  explicit ManifestReader(const std::string& path);

  std::optional<SceneRecord> next();
  std::size_t line_number() const noexcept { return line_no_; }

 private:
  std::ifstream in_;
  std::string base_dir_;
  std::size_t line_no_ = 0;
};

std::vector<SceneRecord> read_manifest(const std::string& path);
void write_manifest(const std::vector<SceneRecord>& records, const std::string& path);

/// Writes <dir>/<name>.jsonl, <dir>/<name>.meta.json and the rendered images.
void write_split(const std::vector<SceneRecord>& records, const std::string& dir, const std::string& name);

std::string directory_of(const std::string& path);
void ensure_directory(const std::string& dir);
void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace affordkit
