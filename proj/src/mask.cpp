#include "affordkit/mask.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "affordkit/error.hpp"
#include "affordkit/image.hpp"

namespace affordkit {

namespace {

void check_dims(int width, int height) {
  if (width < 1 || height < 1)
    throw Error(ErrorCode::InvalidMask, fmt::format("mask dimensions {}x{} must be >= 1", width, height));
}

}  // namespace

MaskImage::MaskImage(int width, int height) : width_(width), height_(height) {
  check_dims(width, height);
  cells_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
}

MaskImage::MaskImage(int width, int height, std::vector<std::uint8_t> cells)
    : width_(width), height_(height), cells_(std::move(cells)) {
  check_dims(width, height);
  if (cells_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw Error(ErrorCode::InvalidMask, "cell count does not match dimensions");
  for (auto& c : cells_) c = c ? 1 : 0;
}

MaskImage MaskImage::from_gray(int width, int height, std::span<const std::uint8_t> gray) {
  check_dims(width, height);
  if (gray.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw Error(ErrorCode::InvalidMask, "gray raster size does not match dimensions");
  std::vector<std::uint8_t> cells(gray.size());
  std::transform(gray.begin(), gray.end(), cells.begin(), [](std::uint8_t v) { return v > 127 ? 1 : 0; });
  return MaskImage(width, height, std::move(cells));
}

MaskImage MaskImage::from_rle(int width, int height, std::span<const std::uint32_t> counts) {
  MaskImage mask(width, height);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (std::uint32_t run : counts) {
    if (run > mask.cells_.size() - pos)
      throw Error(ErrorCode::InvalidMask, "RLE runs exceed width*height");
    std::fill_n(mask.cells_.begin() + static_cast<std::ptrdiff_t>(pos), run, value);
    pos += run;
    value ^= 1;
  }
  if (pos != mask.cells_.size())
    throw Error(ErrorCode::InvalidMask,
                fmt::format("RLE covers {} cells, expected {}", pos, mask.cells_.size()));
  return mask;
}

std::size_t MaskImage::inside_count() const noexcept {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

double MaskImage::area_fraction() const noexcept {
  return cells_.empty() ? 0.0 : static_cast<double>(inside_count()) / static_cast<double>(cells_.size());
}

std::vector<std::uint32_t> MaskImage::to_rle() const {
  std::vector<std::uint32_t> counts;
  std::uint8_t value = 0;
  std::uint32_t run = 0;
  for (std::uint8_t c : cells_) {
    if (c != value) {
      counts.push_back(run);
      run = 0;
      value = c;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

MaskImage read_mask_png(const std::string& path) {
  const Image img = read_png(path);
  if (img.channels == 1) return MaskImage::from_gray(img.width, img.height, img.pixels);
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = img.pixels[i * static_cast<std::size_t>(img.channels)];
  return MaskImage::from_gray(img.width, img.height, gray);
}

void write_mask_png(const MaskImage& mask, const std::string& path) {
  Image img(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask.cells()[i] ? 255 : 0;
  write_png(img, path);
}

}  // namespace affordkit
