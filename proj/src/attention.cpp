#include "affordkit/attention.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "affordkit/error.hpp"
#include "affordkit/manifest.hpp"
#include "affordkit/parallel.hpp"

namespace affordkit {

using nlohmann::json;

void AttentionDump::validate() const {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::InvalidArgument, "attention grid dims must be >= 1");
  if (weights.size() != tokens.size() * patches())
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("weights hold {} values, expected {} tokens x {} patches", weights.size(), tokens.size(),
                            patches()));
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (!(weights[i] >= 0.0f) || !std::isfinite(weights[i]))
      throw Error(ErrorCode::InvalidArgument, fmt::format("weight {} is negative or non-finite", i));
  for (const auto& t : tokens)
    if (t.end < t.start) throw Error(ErrorCode::InvalidArgument, "token end precedes start");
}

std::string serialize_dump(const AttentionDump& dump) {
  dump.validate();
  json tokens = json::array();
  for (const auto& t : dump.tokens) tokens.push_back({{"text", t.text}, {"start", t.start}, {"end", t.end}});
  const json header = {{"version", dump.version}, {"tokens", tokens},       {"grid", {dump.rows, dump.cols}},
                       {"image_ref", dump.image_ref}, {"dtype", "float32"}, {"byte_order", "little"}};
  std::string out = header.dump() + "\n";
  const std::size_t offset = out.size();
  out.resize(offset + dump.weights.size() * 4);
  for (std::size_t i = 0; i < dump.weights.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(dump.weights[i]);
    for (int b = 0; b < 4; ++b) out[offset + i * 4 + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return out;
}

AttentionDump parse_dump(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw Error(ErrorCode::ParseError, "attention dump has no header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("attention dump header: {}", e.what()));
  }
  AttentionDump dump;
  try {
    dump.version = header.at("version").get<int>();
    if (dump.version != 1) throw Error(ErrorCode::ParseError, fmt::format("unsupported dump version {}", dump.version));
    if (header.value("dtype", "float32") != "float32") throw Error(ErrorCode::ParseError, "dtype must be float32");
    if (header.value("byte_order", "little") != "little") throw Error(ErrorCode::ParseError, "byte_order must be little");
    const auto grid = header.at("grid").get<std::vector<int>>();
    if (grid.size() != 2) throw Error(ErrorCode::ParseError, "grid must be [rows, cols]");
    dump.rows = grid[0];
    dump.cols = grid[1];
    dump.image_ref = header.value("image_ref", std::string());
    for (const auto& t : header.at("tokens"))
      dump.tokens.push_back({t.value("text", std::string()), t.at("start").get<std::size_t>(), t.at("end").get<std::size_t>()});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("attention dump header: {}", e.what()));
  }
  if (dump.rows < 1 || dump.cols < 1) throw Error(ErrorCode::ParseError, "grid dims must be >= 1");
  const std::size_t count = dump.tokens.size() * dump.patches();
  if (bytes.size() - nl - 1 != count * 4)
    throw Error(ErrorCode::ParseError,
                fmt::format("payload has {} bytes, expected {}", bytes.size() - nl - 1, count * 4));
  dump.weights.resize(count);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(p[4 * i]) | static_cast<std::uint32_t>(p[4 * i + 1]) << 8 |
                               static_cast<std::uint32_t>(p[4 * i + 2]) << 16 | static_cast<std::uint32_t>(p[4 * i + 3]) << 24;
    dump.weights[i] = std::bit_cast<float>(bits);
  }
  dump.validate();
  return dump;
}

AttentionDump read_dump(const std::string& path) { return parse_dump(read_text_file(path)); }

void write_dump(const AttentionDump& dump, const std::string& path) { write_text_file(path, serialize_dump(dump)); }

StepSegmentation segment_tokens(const AttentionDump& dump, const CoRDocument& doc) {
  const std::size_t len = doc.raw_text.size();
  StepSegmentation seg;
  seg.token_step.resize(dump.tokens.size());
  for (std::size_t i = 0; i < dump.tokens.size(); ++i) {
    const auto& t = dump.tokens[i];
    if (t.end > len || t.start > t.end)
      throw Error(ErrorCode::SpanMismatch,
                  fmt::format("token {} [{}, {}) exceeds text length {}", i, t.start, t.end, len));
    // midpoint (start + end) / 2 compared in doubled coordinates to stay integral
    const std::size_t mid2 = t.start + t.end;
    for (const auto& step : doc.steps) {
      if (2 * step.span.begin <= mid2 && mid2 < 2 * step.span.end) {
        seg.token_step[i] = step.kind;
        seg.step_tokens[static_cast<std::size_t>(step.kind)].push_back(i);
        break;
      }
    }
  }
  return seg;
}

std::vector<double> reduce_tokens(const AttentionDump& dump, const std::vector<std::size_t>& tokens, StepReduce mode) {
  if (tokens.empty()) throw Error(ErrorCode::EmptyRange, "step has no tokens");
  for (std::size_t t : tokens)
    if (t >= dump.tokens.size()) throw Error(ErrorCode::InvalidArgument, "token index out of range");
  const std::size_t patches = dump.patches();
  std::vector<double> out(patches, 0.0);
  const double inv = 1.0 / static_cast<double>(tokens.size());
  // Each task owns a contiguous block of patches and walks the token rows in
  // order, so rows are read sequentially and sums match the serial order.
  constexpr std::size_t kBlock = 64;
  const auto blocks = static_cast<std::ptrdiff_t>((patches + kBlock - 1) / kBlock);
  parallel_for(blocks, [&](std::ptrdiff_t b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock, hi = std::min(patches, lo + kBlock);
    double* acc = out.data();
    for (std::size_t t : tokens) {
      const float* r = dump.row(t);
      for (std::size_t p = lo; p < hi; ++p)
        acc[p] = mode == StepReduce::Mean ? acc[p] + r[p] : std::max(acc[p], static_cast<double>(r[p]));
    }
    if (mode == StepReduce::Mean)
      for (std::size_t p = lo; p < hi; ++p) acc[p] *= inv;
  });
  return out;
}

std::vector<double> reduce_tokens_serial(const AttentionDump& dump, const std::vector<std::size_t>& tokens,
                                         StepReduce mode) {
  if (tokens.empty()) throw Error(ErrorCode::EmptyRange, "step has no tokens");
  std::vector<double> out(dump.patches(), 0.0);
  for (std::size_t t : tokens) {
    const float* r = dump.row(t);
    for (std::size_t p = 0; p < out.size(); ++p)
      out[p] = mode == StepReduce::Mean ? out[p] + r[p] : std::max(out[p], static_cast<double>(r[p]));
  }
  if (mode == StepReduce::Mean)
    for (double& v : out) v *= 1.0 / static_cast<double>(tokens.size());
  return out;
}

std::vector<double> normalize_minmax(const std::vector<double>& values, bool* all_zero) {
  if (all_zero) *all_zero = false;
  if (values.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(values.size());
  if (hi == lo) {
    const bool zero = hi == 0.0;
    if (all_zero) *all_zero = zero;
    std::fill(out.begin(), out.end(), zero ? 0.0 : 1.0);
    return out;
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / range;
  return out;
}

StepHeatmap aggregate_step(const AttentionDump& dump, StepKind kind, const std::vector<std::size_t>& tokens,
                           StepReduce mode) {
  StepHeatmap h;
  h.kind = kind;
  h.rows = dump.rows;
  h.cols = dump.cols;
  h.raw = reduce_tokens(dump, tokens, mode);
  h.values = normalize_minmax(h.raw, &h.all_zero);
  return h;
}

std::vector<double> upsample_bilinear(const std::vector<double>& grid, int rows, int cols, int width, int height) {
  if (grid.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw Error(ErrorCode::InvalidArgument, "grid size does not match rows x cols");
  std::vector<double> out(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  auto g = [&](int r, int c) { return grid[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; };
  parallel_for(height, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    const double gy = std::clamp((y + 0.5) * rows / height - 0.5, 0.0, static_cast<double>(rows - 1));
    const int r0 = static_cast<int>(std::floor(gy));
    const int r1 = std::min(r0 + 1, rows - 1);
    const double fy = gy - r0;
    for (int x = 0; x < width; ++x) {
      const double gx = std::clamp((x + 0.5) * cols / width - 0.5, 0.0, static_cast<double>(cols - 1));
      const int c0 = static_cast<int>(std::floor(gx));
      const int c1 = std::min(c0 + 1, cols - 1);
      const double fx = gx - c0;
      const double top = g(r0, c0) * (1.0 - fx) + g(r0, c1) * fx;
      const double bottom = g(r1, c0) * (1.0 - fx) + g(r1, c1) * fx;
      out[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] =
          top * (1.0 - fy) + bottom * fy;
    }
  });
  return out;
}

Rgb colormap(double v) {
  // inferno sampled at 0, 1/8, ..., 1
  static constexpr std::array<std::array<double, 3>, 9> kAnchors = {{
      {0, 0, 4},
      {31, 12, 72},
      {85, 15, 109},
      {136, 34, 106},
      {186, 54, 85},
      {227, 89, 51},
      {249, 140, 10},
      {249, 201, 50},
      {252, 255, 164},
  }};
  if (std::isnan(v)) v = 0.0;
  v = std::clamp(v, 0.0, 1.0);
  const double pos = v * 8.0;
  const auto i = std::min(static_cast<std::size_t>(pos), std::size_t{7});
  const double f = pos - static_cast<double>(i);
  Rgb out;
  for (std::size_t c = 0; c < 3; ++c)
    out[c] = static_cast<std::uint8_t>(std::lround(kAnchors[i][c] * (1.0 - f) + kAnchors[i + 1][c] * f));
  return out;
}

Image render_overlay(const Image& image, const StepHeatmap& heatmap, const PointSet& points,
                     const OverlayOptions& options) {
  Image out = to_rgb(image);
  const auto field = upsample_bilinear(heatmap.values, heatmap.rows, heatmap.cols, out.width, out.height);
  parallel_for(out.height, [&](std::ptrdiff_t y) {
    for (int x = 0; x < out.width; ++x)
      blend_pixel(out, x, static_cast<int>(y),
                  colormap(field[static_cast<std::size_t>(y) * static_cast<std::size_t>(out.width) + static_cast<std::size_t>(x)]),
                  options.alpha);
  });
  const double radius =
      options.point_radius > 0.0 ? options.point_radius : std::max(2.0, std::min(out.width, out.height) / 60.0);
  for (const auto& p : points.points) fill_circle(out, p.x * out.width, p.y * out.height, radius, options.point_color);
  return out;
}

void write_overlay(const Image& image, const StepHeatmap& heatmap, const PointSet& points, const std::string& path,
                   const OverlayOptions& options) {
  ensure_directory(directory_of(path));
  write_png(render_overlay(image, heatmap, points, options), path);
}

}  // namespace affordkit
