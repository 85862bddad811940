#pragma once

#include <filesystem>

#include "ctgrpo/image.hpp"

namespace ctgrpo {

/// PNG encoding via libpng. Output is deterministic for identical pixels
/// (no timestamps or text chunks are written).
void write_png(const std::filesystem::path& path, const GrayImage& image);
void write_png(const std::filesystem::path& path, const RgbImage& image);

GrayImage read_png_gray(const std::filesystem::path& path);
RgbImage read_png_rgb(const std::filesystem::path& path);

}  // namespace ctgrpo
