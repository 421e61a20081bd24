#pragma once

#include <filesystem>

#include "vocseg/palette.hpp"
#include "vocseg/raster.hpp"

namespace vocseg {

/// Read the raw palette indices of an indexed PNG (8-bit grayscale is
/// accepted as already-indexed). Colour PNGs are rejected: their pixels are
/// not class indices.
IndexedRaster read_indexed_png(const std::filesystem::path& path);

/// Write an indexed PNG carrying the VOC palette.
void write_indexed_png(const std::filesystem::path& path, const IndexedRaster& raster);

}  // namespace vocseg
