#include "vocseg/paired_transforms.hpp"

#include <cmath>
#include <numbers>

#include <torch/torch.h>

#include "vocseg/errors.hpp"

namespace vocseg {

void AugmentPolicy::validate() const {
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("aug_flip_prob must lie in [0, 1]");
  if (!(rotation_deg >= 0.0 && rotation_deg < 180.0)) throw ConfigError("aug_rotation_deg must lie in [0, 180)");
  if (output_size < 1) throw ConfigError("aug_output_size must be positive");
  if (crop_size < 1 || crop_size > output_size) throw ConfigError("aug_crop_size must lie in [1, output size]");
}

AugmentDraw draw(const AugmentPolicy& policy, std::mt19937_64& rng) {
  std::bernoulli_distribution flip(policy.flip_prob);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentDraw d;
  d.do_flip = flip(rng);
  d.angle_deg = policy.rotation_deg * (2.0 * unit(rng) - 1.0);
  return d;
}

AugmentGeometry::AugmentGeometry(const AugmentDraw& draw, const AugmentPolicy& policy, int src_h, int src_w)
    : flip_(draw.do_flip),
      cos_(std::cos(draw.angle_deg * std::numbers::pi / 180.0)),
      sin_(std::sin(draw.angle_deg * std::numbers::pi / 180.0)),
      scale_(static_cast<double>(policy.crop_size) / policy.output_size),
      offset_x_((src_w - policy.crop_size) / 2),
      offset_y_((src_h - policy.crop_size) / 2),
      centre_x_((src_w - 1) / 2.0),
      centre_y_((src_h - 1) / 2.0),
      src_w_(src_w) {}

SourcePoint AugmentGeometry::operator()(int u, int v) const {
  // resize back from the crop, then undo the crop offset
  const double rx = (u + 0.5) * scale_ - 0.5 + offset_x_;
  const double ry = (v + 0.5) * scale_ - 0.5 + offset_y_;
  // undo a counter-clockwise (as displayed, y pointing down) rotation
  const double dx = rx - centre_x_;
  const double dy = ry - centre_y_;
  const double fx = centre_x_ + dx * cos_ - dy * sin_;
  const double fy = centre_y_ + dx * sin_ + dy * cos_;
  return {flip_ ? (src_w_ - 1) - fx : fx, fy};
}

SegSample apply(const SegSample& sample, const AugmentDraw& draw, const AugmentPolicy& policy) {
  if (!policy.enabled) return sample;
  const AugmentGeometry geometry(draw, policy, sample.image.height, sample.image.width);
  const int out = policy.output_size;
  return {warp_bilinear(sample.image, out, out, geometry, 0.0f),
          warp_nearest(sample.mask, out, out, geometry, std::uint8_t{0}), sample.id};
}

Batch augment_train_batch(const Batch& batch, const AugmentPolicy& policy, std::mt19937_64& rng) {
  if (!policy.enabled) return batch;
  std::vector<torch::Tensor> images;
  std::vector<torch::Tensor> masks;
  for (std::int64_t i = 0; i < batch.size(); ++i) {
    const SegSample in{tensor_to_image(batch.images[i]), tensor_to_mask(batch.masks[i]), batch.ids[i]};
    const SegSample out = apply(in, draw(policy, rng), policy);
    images.push_back(image_to_tensor(out.image));
    masks.push_back(mask_to_tensor(out.mask));
  }
  return {torch::stack(images), torch::stack(masks), batch.ids};
}

}  // namespace vocseg
