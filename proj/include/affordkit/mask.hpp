#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace affordkit {

/// Binary raster, row-major, one byte per cell (0 outside, 1 inside).
class MaskImage {
 public:
  MaskImage() = default;
  /// All-outside mask. Throws InvalidMask unless width, height >= 1.
  MaskImage(int width, int height);
  MaskImage(int width, int height, std::vector<std::uint8_t> cells);

  /// 8-bit grayscale raster; values > 127 are inside.
  static MaskImage from_gray(int width, int height, std::span<const std::uint8_t> gray);
  /// Alternating outside/inside run lengths, starting with outside.
  static MaskImage from_rle(int width, int height, std::span<const std::uint32_t> counts);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return cells_.size(); }

  bool at(int col, int row) const noexcept {
    return cells_[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col)] != 0;
  }
  void set(int col, int row, bool inside) noexcept {
    cells_[static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col)] = inside ? 1 : 0;
  }

  std::span<const std::uint8_t> cells() const noexcept { return cells_; }
  std::size_t inside_count() const noexcept;
  double area_fraction() const noexcept;

  std::vector<std::uint32_t> to_rle() const;

  friend bool operator==(const MaskImage&, const MaskImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Reads a single-channel 8-bit PNG (or any PNG, converted to gray) as a mask.
MaskImage read_mask_png(const std::string& path);
void write_mask_png(const MaskImage& mask, const std::string& path);

}  // namespace affordkit
