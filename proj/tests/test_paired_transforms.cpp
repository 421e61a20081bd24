#include <gtest/gtest.h>

#include <cmath>

#include "synthetic_voc.hpp"
#include "vocseg/errors.hpp"
#include "vocseg/paired_transforms.hpp"

using namespace vocseg;

namespace {

// Image whose pixels encode their own coordinates.
SegSample coordinate_sample(int h, int w) {
  SegSample s{Image(3, h, w), Mask(1, h, w), "coords"};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      s.image.at(0, y, x) = static_cast<float>(x);
      s.image.at(1, y, x) = static_cast<float>(y);
      s.image.at(2, y, x) = 1.0f;
      s.mask.at(y, x) = static_cast<std::uint8_t>((x + y) % 21);
    }
  }
  return s;
}

AugmentPolicy no_crop(int size) {
  AugmentPolicy p;
  p.crop_size = size;
  p.output_size = size;
  return p;
}

}  // namespace

TEST(Augment, IdentityDrawIsExactIdentity) {
  const SegSample s = coordinate_sample(224, 224);
  const SegSample out = apply(s, {false, 0.0}, no_crop(224));
  EXPECT_EQ(out.image, s.image);
  EXPECT_EQ(out.mask, s.mask);
}

TEST(Augment, FlipIndexMap) {
  for (int w : {224, 7, 8}) {
    const SegSample s = coordinate_sample(w, w);
    const SegSample out = apply(s, {true, 0.0}, no_crop(w));
    for (int y = 0; y < w; ++y) {
      for (int x = 0; x < w; ++x) {
        ASSERT_EQ(out.image.at(0, y, x), static_cast<float>(w - 1 - x));
        ASSERT_EQ(out.image.at(1, y, x), static_cast<float>(y));
        ASSERT_EQ(out.mask.at(y, x), s.mask.at(y, w - 1 - x));
      }
    }
  }
}

TEST(Augment, FlipIsInvolution) {
  const SegSample s = coordinate_sample(224, 224);
  const auto p = no_crop(224);
  const SegSample twice = apply(apply(s, {true, 0.0}, p), {true, 0.0}, p);
  EXPECT_EQ(twice.image, s.image);
  EXPECT_EQ(twice.mask, s.mask);
}

TEST(Augment, RotationIsCounterClockwise) {
  // 224 is even, so use an odd canvas to have an exact centre pixel.
  const int n = 101, c = 50;
  SegSample s{Image(3, n, n), Mask(1, n, n), "marker"};
  s.mask.at(c, c + 30) = 5;  // right of centre
  const SegSample out = apply(s, {false, 90.0}, no_crop(n));
  EXPECT_EQ(out.mask.at(c - 30, c), 5);  // moves above centre
  EXPECT_EQ(std::count(out.mask.data.begin(), out.mask.data.end(), 5), 1);
}

TEST(Augment, CentreCropOffsets) {
  AugmentPolicy p;  // crop 180 -> 224
  const AugmentGeometry g({false, 0.0}, p, 224, 224);
  const double scale = 180.0 / 224.0;
  for (int u : {0, 17, 111, 223}) {
    const SourcePoint q = g(u, u);
    EXPECT_NEAR(q.x, (u + 0.5) * scale - 0.5 + 22.0, 1e-12);
    EXPECT_NEAR(q.y, q.x, 1e-12);
  }
}

TEST(Augment, ConstantMaskStaysConstant) {
  AugmentPolicy p;
  std::mt19937_64 rng(1);
  for (int k = 1; k < 21; ++k) {
    SegSample s{Image(3, 224, 224, 0.25f), Mask(1, 224, 224, static_cast<std::uint8_t>(k)), "c"};
    const SegSample out = apply(s, draw(p, rng), p);
    for (auto v : out.mask.data) ASSERT_EQ(v, k);
    for (float v : out.image.data) ASSERT_NEAR(v, 0.25f, 1e-6);
  }
}

TEST(Augment, MaskNeverGainsNewClasses) {
  AugmentPolicy p;
  p.rotation_deg = 30.0;  // big enough to pull in fill
  std::mt19937_64 rng(2);
  const SegSample s = coordinate_sample(224, 224);
  for (int t = 0; t < 10; ++t) {
    const SegSample out = apply(s, draw(p, rng), p);
    for (auto v : out.mask.data) ASSERT_LT(v, 21);
  }
}

TEST(Augment, GeometryLockBetweenImageAndMask) {
  // Blocky scene: the image channel equals class / 20 inside each 16px block.
  SegSample s{Image(3, 224, 224), Mask(1, 224, 224), "blocks"};
  for (int y = 0; y < 224; ++y) {
    for (int x = 0; x < 224; ++x) {
      const int cls = 1 + ((x / 16) * 7 + (y / 16) * 3) % 20;
      s.mask.at(y, x) = static_cast<std::uint8_t>(cls);
      for (int c = 0; c < 3; ++c) s.image.at(c, y, x) = cls / 20.0f;
    }
  }
  AugmentPolicy p;
  std::mt19937_64 rng(5);
  for (int t = 0; t < 8; ++t) {
    const AugmentDraw d = draw(p, rng);
    const SegSample out = apply(s, d, p);
    const AugmentGeometry g(d, p, 224, 224);
    int checked = 0;
    for (int v = 0; v < 224; ++v) {
      for (int u = 0; u < 224; ++u) {
        const SourcePoint q = g(u, v);
        const double fx = q.x - std::floor(q.x / 16) * 16, fy = q.y - std::floor(q.y / 16) * 16;
        if (fx < 1.5 || fx > 14.5 || fy < 1.5 || fy > 14.5) continue;  // near a block edge
        ASSERT_NEAR(out.image.at(0, v, u) * 20.0f, out.mask.at(v, u), 1e-4) << u << "," << v;
        ++checked;
      }
    }
    EXPECT_GT(checked, 224 * 224 / 2);
  }
}

TEST(Augment, DrawRangeAndRngUsage) {
  AugmentPolicy p;
  std::mt19937_64 rng(9), shadow(9);
  int flips = 0;
  for (int i = 0; i < 4000; ++i) {
    const AugmentDraw d = draw(p, rng);
    shadow.discard(2);
    ASSERT_EQ(rng, shadow);
    ASSERT_GE(d.angle_deg, -5.0);
    ASSERT_LE(d.angle_deg, 5.0);
    flips += d.do_flip;
  }
  EXPECT_NEAR(flips / 4000.0, 0.5, 0.04);
}

TEST(Augment, DisabledPolicyIsIdentity) {
  AugmentPolicy p;
  p.enabled = false;
  const SegSample s = coordinate_sample(50, 60);
  const SegSample out = apply(s, {true, 4.0}, p);
  EXPECT_EQ(out.image, s.image);
  EXPECT_EQ(out.mask, s.mask);
}

TEST(Augment, BatchDrawsArePerSampleAndSeeded) {
  auto samples = vocseg::testing::synthetic_samples(1, {3}, 4);
  samples.push_back(samples[0]);
  samples.push_back(samples[0]);
  const std::vector<std::size_t> idx = {0, 1, 2};
  const Batch b = collate(samples, idx);
  AugmentPolicy p;
  std::mt19937_64 r1(77), r2(77);
  const Batch a1 = augment_train_batch(b, p, r1);
  const Batch a2 = augment_train_batch(b, p, r2);
  EXPECT_TRUE(torch::equal(a1.images, a2.images));
  EXPECT_TRUE(torch::equal(a1.masks, a2.masks));
  EXPECT_FALSE(torch::equal(a1.masks[0], a1.masks[1]) && torch::equal(a1.masks[1], a1.masks[2]));
  EXPECT_EQ(a1.images.sizes(), b.images.sizes());
}

TEST(Augment, PolicyValidation) {
  AugmentPolicy p;
  p.crop_size = 300;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.flip_prob = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_NO_THROW(AugmentPolicy{}.validate());
}
