#include "vocseg/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

namespace vocseg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void on_png_error(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = message;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

IndexedRaster read_indexed_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open mask " + path.string());

  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error, on_png_warning);
  if (!png) throw DataError("libpng init failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed for " + path.string());
  }

  IndexedRaster out;
  std::vector<png_bytep> rows;
  bool colour = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int colour_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);

  if (colour_type != PNG_COLOR_TYPE_PALETTE && colour_type != PNG_COLOR_TYPE_GRAY) {
    colour = true;
  } else {
    if (bit_depth < 8) png_set_packing(png);
    if (bit_depth == 16) png_set_strip_16(png);
    png_read_update_info(png, info);

    out = IndexedRaster(1, static_cast<int>(height), static_cast<int>(width));
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = out.data.data() + static_cast<std::size_t>(y) * width;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (colour) throw DataError("mask " + path.string() + " is not palette-indexed");
  return out;
}

void write_indexed_png(const std::filesystem::path& path, const IndexedRaster& raster) {
  if (raster.empty() || raster.channels != 1) throw DataError("cannot write empty or multi-channel index raster");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot create " + path.string());

  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error, on_png_warning);
  if (!png) throw DataError("libpng init failed for " + path.string());
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed for " + path.string());
  }

  std::vector<png_color> colours(256);
  for (int i = 0; i < 256; ++i) colours[i] = {kVocPalette[i].r, kVocPalette[i].g, kVocPalette[i].b};
  std::vector<png_bytep> rows(raster.height);
  for (int y = 0; y < raster.height; ++y) {
    rows[y] = const_cast<png_bytep>(raster.data.data() + static_cast<std::size_t>(y) * raster.width);
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, raster.width, raster.height, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_PLTE(png, info, colours.data(), static_cast<int>(colours.size()));
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace vocseg
