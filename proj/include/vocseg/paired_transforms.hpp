#pragma once

#include <random>

#include "vocseg/voc_data.hpp"

namespace vocseg {

/// Training-time geometric augmentation, applied identically to image and
/// mask. Rotation is drawn from [-rotation_deg, +rotation_deg].
struct AugmentPolicy {
  double flip_prob = 0.5;
  double rotation_deg = 5.0;
  int crop_size = 180;
  int output_size = kImageSize;
  bool enabled = true;

  void validate() const;
};

/// Random choices for one sample. Together with the policy this fixes the
/// geometric map completely (the crop is always centred).
struct AugmentDraw {
  bool do_flip = false;
  double angle_deg = 0.0;

  friend bool operator==(const AugmentDraw&, const AugmentDraw&) = default;
};

/// Consumes exactly two values from `rng` (flip, then angle).
AugmentDraw draw(const AugmentPolicy& policy, std::mt19937_64& rng);

/// Output-to-source coordinate map of the pipeline
/// flip -> rotate(angle, counter-clockwise) -> centre crop -> resize,
/// for a src_h x src_w input.
class AugmentGeometry {
 public:
  AugmentGeometry(const AugmentDraw& draw, const AugmentPolicy& policy, int src_h, int src_w);
  SourcePoint operator()(int u, int v) const;

 private:
  bool flip_;
  double cos_, sin_;
  double scale_;
  double offset_x_, offset_y_;
  double centre_x_, centre_y_;
  int src_w_;
};

/// Image: bilinear, fill 0. Mask: nearest, fill background.
/// A disabled policy returns the sample unchanged.
SegSample apply(const SegSample& sample, const AugmentDraw& draw, const AugmentPolicy& policy);

/// Per-sample independent draws taken from `rng` in batch order.
Batch augment_train_batch(const Batch& batch, const AugmentPolicy& policy, std::mt19937_64& rng);

}  // namespace vocseg
