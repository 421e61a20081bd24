#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "vocseg/errors.hpp"

namespace vocseg {

/// Planar (channel-major) raster. Layout matches a (C, H, W) tensor so it can
/// be handed to libtorch without reordering.
template <typename T>
struct Raster {
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Raster() = default;
  Raster(int c, int h, int w, T fill = T{})
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  bool empty() const { return height <= 0 || width <= 0 || channels <= 0; }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }

  T& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  const T& at(int c, int y, int x) const {
    return data[c * plane() + static_cast<std::size_t>(y) * width + x];
  }
  T& at(int y, int x) { return at(0, y, x); }
  const T& at(int y, int x) const { return at(0, y, x); }

  template <typename U>
  bool same_size(const Raster<U>& other) const {
    return height == other.height && width == other.width;
  }

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// RGB image, values in [0, 1].
using Image = Raster<float>;
/// Single-channel class-index grid.
using Mask = Raster<std::uint8_t>;
/// Single-channel palette-index raster as stored in an indexed PNG.
using IndexedRaster = Raster<std::uint8_t>;

/// Continuous source position in pixel-centre coordinates: pixel (x, y)
/// covers [x - 0.5, x + 0.5) and integer coordinates hit pixel centres.
struct SourcePoint {
  double x;
  double y;
};

/// Resample `src` onto an out_h x out_w grid. `map(u, v)` gives the source
/// position for output column u, row v. Bilinear; positions more than half a
/// pixel outside the source take `fill`, positions in the half-pixel border
/// clamp to the edge.
template <typename Map>
Image warp_bilinear(const Image& src, int out_h, int out_w, Map&& map, float fill = 0.0f) {
  Image out(src.channels, out_h, out_w, fill);
  for (int v = 0; v < out_h; ++v) {
    for (int u = 0; u < out_w; ++u) {
      const SourcePoint p = map(u, v);
      if (p.x < -0.5 || p.y < -0.5 || p.x > src.width - 0.5 || p.y > src.height - 0.5) continue;
      const double cx = std::clamp(p.x, 0.0, static_cast<double>(src.width - 1));
      const double cy = std::clamp(p.y, 0.0, static_cast<double>(src.height - 1));
      const int x0 = static_cast<int>(std::floor(cx));
      const int y0 = static_cast<int>(std::floor(cy));
      const int x1 = std::min(x0 + 1, src.width - 1);
      const int y1 = std::min(y0 + 1, src.height - 1);
      const double ax = cx - x0;
      const double ay = cy - y0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = (1.0 - ax) * src.at(c, y0, x0) + ax * src.at(c, y0, x1);
        const double bottom = (1.0 - ax) * src.at(c, y1, x0) + ax * src.at(c, y1, x1);
        out.at(c, v, u) = static_cast<float>((1.0 - ay) * top + ay * bottom);
      }
    }
  }
  return out;
}

/// Nearest-neighbour counterpart of warp_bilinear; never invents values
/// other than those in `src` and `fill`.
template <typename T, typename Map>
Raster<T> warp_nearest(const Raster<T>& src, int out_h, int out_w, Map&& map, T fill = T{}) {
  Raster<T> out(src.channels, out_h, out_w, fill);
  for (int v = 0; v < out_h; ++v) {
    for (int u = 0; u < out_w; ++u) {
      const SourcePoint p = map(u, v);
      const auto x = static_cast<long>(std::floor(p.x + 0.5));
      const auto y = static_cast<long>(std::floor(p.y + 0.5));
      if (x < 0 || y < 0 || x >= src.width || y >= src.height) continue;
      for (int c = 0; c < src.channels; ++c) {
        out.at(c, v, u) = src.at(c, static_cast<int>(y), static_cast<int>(x));
      }
    }
  }
  return out;
}

/// Source mapping for a plain rescale of a src_h x src_w raster onto
/// out_h x out_w (half-pixel-centre convention).
struct ScaleMap {
  double sx;
  double sy;
  ScaleMap(int src_h, int src_w, int out_h, int out_w)
      : sx(static_cast<double>(src_w) / out_w), sy(static_cast<double>(src_h) / out_h) {}
  SourcePoint operator()(int u, int v) const {
    return {(u + 0.5) * sx - 0.5, (v + 0.5) * sy - 0.5};
  }
};

}  // namespace vocseg
