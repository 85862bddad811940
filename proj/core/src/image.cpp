#include "ctgrpo/image.hpp"

#include <algorithm>
#include <cmath>

#include "ctgrpo/error.hpp"

namespace ctgrpo {

RgbImage to_rgb(const GrayImage& gray) {
  RgbImage out(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = gray.pixels[i];
  }
  return out;
}

GrayImage resize_bilinear(const GrayImage& src, const Rect& crop, int out_w, int out_h) {
  if (crop.empty() || crop.x0 < 0 || crop.y0 < 0 || crop.x1 > src.width || crop.y1 > src.height)
    throw InvalidInput("resize crop lies outside the source image");
  if (out_w <= 0 || out_h <= 0) throw InvalidInput("resize target must be non-empty");
  GrayImage out(out_w, out_h);
  const double sx = static_cast<double>(crop.width()) / out_w;
  const double sy = static_cast<double>(crop.height()) / out_h;

  // Precompute horizontal taps.
  std::vector<int> xi(static_cast<std::size_t>(out_w));
  std::vector<double> xf(static_cast<std::size_t>(out_w));
  for (int x = 0; x < out_w; ++x) {
    double fx = (x + 0.5) * sx - 0.5;
    fx = std::clamp(fx, 0.0, static_cast<double>(crop.width() - 1));
    const int i0 = std::min(static_cast<int>(fx), crop.width() - 1);
    xi[x] = i0;
    xf[x] = fx - i0;
  }
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(crop.height() - 1));
    const int j0 = std::min(static_cast<int>(fy), crop.height() - 1);
    const int j1 = std::min(j0 + 1, crop.height() - 1);
    const double wy = fy - j0;
    for (int x = 0; x < out_w; ++x) {
      const int i0 = xi[x];
      const int i1 = std::min(i0 + 1, crop.width() - 1);
      const double wx = xf[x];
      const double a = src.at(crop.x0 + i0, crop.y0 + j0);
      const double b = src.at(crop.x0 + i1, crop.y0 + j0);
      const double c = src.at(crop.x0 + i0, crop.y0 + j1);
      const double d = src.at(crop.x0 + i1, crop.y0 + j1);
      const double top = a + (b - a) * wx;
      const double bottom = c + (d - c) * wx;
      const double v = top + (bottom - top) * wy;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

}  // namespace ctgrpo
