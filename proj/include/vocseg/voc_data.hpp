#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

#include "vocseg/palette.hpp"
#include "vocseg/raster.hpp"

namespace vocseg {

inline constexpr int kImageSize = 224;

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

/// VOC-layout dataset directory:
///   ImageSets/Segmentation/{train,val,test}.txt
///   JPEGImages/<id>.jpg
///   SegmentationClass/<id>.png   (palette PNG)
class DatasetRoot {
 public:
  explicit DatasetRoot(std::filesystem::path root);

  const std::filesystem::path& path() const { return root_; }
  std::filesystem::path split_file(Split split) const;
  std::filesystem::path image_path(std::string_view id) const;
  std::filesystem::path mask_path(std::string_view id) const;

 private:
  std::filesystem::path root_;
};

/// One image/mask pair at network resolution.
struct SegSample {
  Image image;  // 3 x H x W, [0, 1]
  Mask mask;    // 1 x H x W, classes 0..20
  std::string id;
};

/// Stacked samples ready for the network.
struct Batch {
  torch::Tensor images;  // (B, 3, H, W) float32
  torch::Tensor masks;   // (B, H, W) int64
  std::vector<std::string> ids;

  std::int64_t size() const { return static_cast<std::int64_t>(ids.size()); }
};

using ClassCounts = std::array<std::int64_t, kNumClasses>;

/// Identifiers of a split in file order. Throws ConfigError when the list is
/// missing and DataError naming the first id lacking an image or mask.
std::vector<std::string> load_split(const DatasetRoot& root, Split split);

/// Palette indices to class indices; the void index 255 becomes background.
/// Any other index above 20 is rejected with its pixel location.
Mask decode_mask(const IndexedRaster& indexed);

/// Bilinear image / nearest mask resize to target x target.
SegSample resize_sample(const Image& image, const Mask& mask, int target = kImageSize, std::string id = {});

/// Read a JPEG/PNG colour image as RGB in [0, 1].
Image read_image(const std::filesystem::path& path);

SegSample load_sample(const DatasetRoot& root, const std::string& id, int target = kImageSize);

/// Load samples in id order. `workers` > 1 decodes in parallel; the result
/// order never depends on it.
std::vector<SegSample> load_samples(const DatasetRoot& root, std::span<const std::string> ids,
                                    int target = kImageSize, int workers = 1);

/// Partition [0, n) into consecutive batches of `batch_size` indices, after an
/// optional seeded shuffle. The last batch may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch_size, bool shuffle,
                                                    std::uint64_t seed);

Batch collate(std::span<const SegSample> samples, std::span<const std::size_t> indices);

std::vector<Batch> make_batches(std::span<const SegSample> samples, int batch_size, bool shuffle,
                                std::uint64_t seed);

/// Per-class pixel totals over the given masks.
ClassCounts class_pixel_counts(std::span<const SegSample> samples);

/// Tensor <-> raster helpers shared with the augmentation and rendering code.
torch::Tensor image_to_tensor(const Image& image);
torch::Tensor mask_to_tensor(const Mask& mask);
Image tensor_to_image(const torch::Tensor& chw);
Mask tensor_to_mask(const torch::Tensor& hw);

}  // namespace vocseg
