#include "ctgrpo/png_io.hpp"

#include <png.h>
#include <zlib.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

#include "ctgrpo/error.hpp"

namespace ctgrpo {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_rows(const std::filesystem::path& path, int width, int height, int color_type, int channels,
                const std::uint8_t* data) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, Z_BEST_SPEED);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

template <typename Image>
Image read_as(const std::filesystem::path& path, png_uint_32 format, int channels) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw InvalidInput("cannot read PNG " + path.string() + ": " + img.message);
  img.format = format;
  Image out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.pixels.resize(static_cast<std::size_t>(img.width) * img.height * channels);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw InvalidInput("cannot decode PNG " + path.string() + ": " + img.message);
  }
  return out;
}

}  // namespace

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  write_rows(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, 1, image.pixels.data());
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_rows(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 3, image.pixels.data());
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  return read_as<GrayImage>(path, PNG_FORMAT_GRAY, 1);
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  return read_as<RgbImage>(path, PNG_FORMAT_RGB, 3);
}

}  // namespace ctgrpo
