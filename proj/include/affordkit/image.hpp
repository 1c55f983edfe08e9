#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace affordkit {

using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit raster (1 = gray, 3 = RGB, 4 = RGBA), row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

  std::uint8_t* at(int x, int y) {
    return pixels.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                               static_cast<std::size_t>(channels);
  }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                               static_cast<std::size_t>(channels);
  }

  friend bool operator==(const Image&, const Image&) = default;
};

Image read_png(const std::string& path);
void write_png(const Image& image, const std::string& path);
std::vector<std::uint8_t> encode_png(const Image& image);

/// Expands gray/RGBA to RGB (alpha dropped).
Image to_rgb(const Image& image);

// Raster drawing primitives; all clip to the image bounds.
void fill_rect(Image& image, int x0, int y0, int x1, int y1, Rgb color);
void fill_circle(Image& image, double cx, double cy, double radius, Rgb color);
void draw_line(Image& image, double x0, double y0, double x1, double y1, double thickness, Rgb color);
void blend_pixel(Image& image, int x, int y, Rgb color, double alpha);

}  // namespace affordkit
