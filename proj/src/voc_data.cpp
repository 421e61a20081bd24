#include "vocseg/voc_data.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>

#include "vocseg/errors.hpp"
#include "vocseg/png_io.hpp"

namespace vocseg {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

DatasetRoot::DatasetRoot(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path DatasetRoot::split_file(Split split) const {
  return root_ / "ImageSets" / "Segmentation" / (std::string(to_string(split)) + ".txt");
}

std::filesystem::path DatasetRoot::image_path(std::string_view id) const {
  return root_ / "JPEGImages" / (std::string(id) + ".jpg");
}

std::filesystem::path DatasetRoot::mask_path(std::string_view id) const {
  return root_ / "SegmentationClass" / (std::string(id) + ".png");
}

std::vector<std::string> load_split(const DatasetRoot& root, Split split) {
  const auto list = root.split_file(split);
  std::ifstream in(list);
  if (!in) throw ConfigError("missing split list " + list.string());

  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string id;
    if (!(fields >> id)) continue;
    if (!std::filesystem::is_regular_file(root.image_path(id))) {
      throw DataError("sample '" + id + "' has no image at " + root.image_path(id).string());
    }
    if (!std::filesystem::is_regular_file(root.mask_path(id))) {
      throw DataError("sample '" + id + "' has no mask at " + root.mask_path(id).string());
    }
    ids.push_back(std::move(id));
  }
  return ids;
}

Mask decode_mask(const IndexedRaster& indexed) {
  if (indexed.channels != 1) throw DataError("mask must be single-channel");
  Mask mask(1, indexed.height, indexed.width);
  for (int y = 0; y < indexed.height; ++y) {
    for (int x = 0; x < indexed.width; ++x) {
      const std::uint8_t v = indexed.at(y, x);
      if (v == kVoidIndex) {
        mask.at(y, x) = 0;
      } else if (v < kNumClasses) {
        mask.at(y, x) = v;
      } else {
        throw DataError("illegal palette index " + std::to_string(v) + " at row " + std::to_string(y) +
                        ", column " + std::to_string(x));
      }
    }
  }
  return mask;
}

SegSample resize_sample(const Image& image, const Mask& mask, int target, std::string id) {
  if (image.empty() || mask.empty()) throw DataError("cannot resize empty sample '" + id + "'");
  if (!image.same_size(mask)) {
    throw DataError("image and mask sizes differ for sample '" + id + "'");
  }
  if (target < 1) throw DataError("resize target must be positive");
  if (image.height == target && image.width == target) return {image, mask, std::move(id)};

  const ScaleMap map(image.height, image.width, target, target);
  return {warp_bilinear(image, target, target, map), warp_nearest(mask, target, target, map),
          std::move(id)};
}

Image read_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image " + path.string());
  Image image(3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = row[x][2 - c] / 255.0f;
    }
  }
  return image;
}

SegSample load_sample(const DatasetRoot& root, const std::string& id, int target) {
  Image image = read_image(root.image_path(id));
  Mask mask;
  try {
    mask = decode_mask(read_indexed_png(root.mask_path(id)));
  } catch (const DataError& e) {
    throw DataError("sample '" + id + "': " + e.what());
  }
  return resize_sample(image, mask, target, id);
}

std::vector<SegSample> load_samples(const DatasetRoot& root, std::span<const std::string> ids, int target,
                                    int workers) {
  std::vector<SegSample> samples(ids.size());
  workers = std::max(1, workers);
  if (workers == 1 || ids.size() < 2) {
    for (std::size_t i = 0; i < ids.size(); ++i) samples[i] = load_sample(root, ids[i], target);
    return samples;
  }
  // Strided assignment: worker w fills slots w, w + workers, ...
  std::vector<std::future<void>> jobs;
  for (int w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < ids.size(); i += workers) samples[i] = load_sample(root, ids[i], target);
    }));
  }
  for (auto& job : jobs) job.get();
  return samples;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch_size, bool shuffle,
                                                    std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return batches;
}

torch::Tensor image_to_tensor(const Image& image) {
  return torch::from_blob(const_cast<float*>(image.data.data()), {image.channels, image.height, image.width},
                          torch::kFloat32)
      .clone();
}

torch::Tensor mask_to_tensor(const Mask& mask) {
  return torch::from_blob(const_cast<std::uint8_t*>(mask.data.data()), {mask.height, mask.width}, torch::kUInt8)
      .to(torch::kInt64);
}

Image tensor_to_image(const torch::Tensor& chw) {
  const auto t = chw.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (t.dim() != 3) throw DataError("expected a (C, H, W) image tensor");
  Image image(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
  std::copy_n(t.data_ptr<float>(), image.data.size(), image.data.begin());
  return image;
}

Mask tensor_to_mask(const torch::Tensor& hw) {
  const auto t = hw.detach().to(torch::kCPU, torch::kUInt8).contiguous();
  if (t.dim() != 2) throw DataError("expected a (H, W) mask tensor");
  Mask mask(1, static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
  std::copy_n(t.data_ptr<std::uint8_t>(), mask.data.size(), mask.data.begin());
  return mask;
}

Batch collate(std::span<const SegSample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("cannot collate an empty batch");
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> masks;
  Batch batch;
  for (std::size_t i : indices) {
    const SegSample& s = samples[i];
    if (!s.image.same_size(s.mask)) throw DataError("sample '" + s.id + "' image/mask size mismatch");
    images.push_back(image_to_tensor(s.image));
    masks.push_back(mask_to_tensor(s.mask));
    batch.ids.push_back(s.id);
  }
  batch.images = torch::stack(images);
  batch.masks = torch::stack(masks);
  return batch;
}

std::vector<Batch> make_batches(std::span<const SegSample> samples, int batch_size, bool shuffle,
                                std::uint64_t seed) {
  if (samples.empty()) throw DataError("cannot batch an empty sample list");
  std::vector<Batch> batches;
  for (const auto& idx : batch_indices(samples.size(), batch_size, shuffle, seed)) {
    batches.push_back(collate(samples, idx));
  }
  return batches;
}

ClassCounts class_pixel_counts(std::span<const SegSample> samples) {
  ClassCounts counts{};
  for (const SegSample& s : samples) {
    for (std::uint8_t v : s.mask.data) {
      if (v >= kNumClasses) throw DataError("sample '" + s.id + "' holds undecoded class " + std::to_string(v));
      ++counts[v];
    }
  }
  return counts;
}

}  // namespace vocseg
