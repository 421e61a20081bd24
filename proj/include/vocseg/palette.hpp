#pragma once

#include <array>
#include <cstdint>

namespace vocseg {

inline constexpr int kNumClasses = 21;
inline constexpr std::uint8_t kVoidIndex = 255;

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Standard VOC colour map: bits of the index are spread over the high bits of
// the three channels, three at a time.
constexpr std::array<Rgb, 256> make_voc_palette() {
  std::array<Rgb, 256> palette{};
  for (int i = 0; i < 256; ++i) {
    int r = 0, g = 0, b = 0;
    int c = i;
    for (int j = 0; j < 8; ++j) {
      r |= ((c >> 0) & 1) << (7 - j);
      g |= ((c >> 1) & 1) << (7 - j);
      b |= ((c >> 2) & 1) << (7 - j);
      c >>= 3;
    }
    palette[i] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                  static_cast<std::uint8_t>(b)};
  }
  return palette;
}

inline constexpr std::array<Rgb, 256> kVocPalette = make_voc_palette();

inline constexpr std::array<const char*, kNumClasses> kVocClassNames = {
    "background", "aeroplane", "bicycle", "bird",  "boat",        "bottle", "bus",
    "car",        "cat",       "chair",   "cow",   "diningtable", "dog",    "horse",
    "motorbike",  "person",    "pottedplant", "sheep", "sofa",    "train",  "tvmonitor"};

}  // namespace vocseg
