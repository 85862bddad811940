#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ctgrpo {

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// 8-bit single-channel image, row-major. Binary masks use values {0, 1}.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// 8-bit interleaved RGB image.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 0) {}

  std::uint8_t* px(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

RgbImage to_rgb(const GrayImage& gray);

/// Bilinear resample of `crop` (inside `src`) to out_w x out_h using
/// pixel-center alignment; a same-size crop is copied exactly.
GrayImage resize_bilinear(const GrayImage& src, const Rect& crop, int out_w, int out_h);

}  // namespace ctgrpo
