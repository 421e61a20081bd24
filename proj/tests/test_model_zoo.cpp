#include <gtest/gtest.h>

#include <cmath>

#include "vocseg/errors.hpp"
#include "vocseg/model_zoo.hpp"

using namespace vocseg;

namespace {

std::vector<std::pair<int, int>> channel_ladder(const ModelSpec& spec, LayerKind kind) {
  std::vector<std::pair<int, int>> out;
  for (const auto& l : spec.layers)
    if (l.kind == kind) out.emplace_back(l.in_channels, l.out_channels);
  return out;
}

using Ladder = std::vector<std::pair<int, int>>;

}  // namespace

TEST(ModelSpec, BaselineLadder) {
  const ModelSpec s = make_spec(ArchId::fcn_baseline);
  EXPECT_EQ(channel_ladder(s, LayerKind::conv),
            (Ladder{{3, 32}, {32, 64}, {64, 128}, {128, 256}, {256, 512}, {32, 21}}));
  EXPECT_EQ(channel_ladder(s, LayerKind::transposed_conv),
            (Ladder{{512, 512}, {512, 256}, {256, 128}, {128, 64}, {64, 32}}));
  for (const auto& l : s.layers) {
    if (l.kind == LayerKind::transposed_conv) {
      EXPECT_EQ(l.kernel, 3);
      EXPECT_EQ(l.stride, 2);
      EXPECT_EQ(l.padding, 1);
      EXPECT_EQ(l.output_padding, 1);
    }
  }
  EXPECT_TRUE(s.frozen_prefix.empty());
}

TEST(ModelSpec, BaselineSpatialPath) {
  const ModelSpec s = make_spec(ArchId::fcn_baseline);
  const auto sizes = validate_spec(s, 224);
  std::vector<int> conv_sizes, deconv_sizes;
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    if (s.layers[i].kind == LayerKind::conv) conv_sizes.push_back(sizes[i]);
    if (s.layers[i].kind == LayerKind::transposed_conv) deconv_sizes.push_back(sizes[i]);
  }
  EXPECT_EQ(conv_sizes, (std::vector<int>{112, 56, 28, 14, 7, 224}));
  EXPECT_EQ(deconv_sizes, (std::vector<int>{14, 28, 56, 112, 224}));
}

TEST(ModelSpec, AdvancedFcnSkips) {
  const ModelSpec s = make_spec(ArchId::advanced_fcn);
  EXPECT_EQ(s.layer("deconv1").in_channels, 2048);
  EXPECT_EQ(s.layer("deconv2").in_channels, 2048 + 1024);
  EXPECT_EQ(s.layer("deconv3").in_channels, 1024 + 512);
  EXPECT_EQ(s.layer("deconv7").in_channels, 64 + 32);
  EXPECT_EQ(s.layer("deconv7").out_channels, 32);
  const char* sources[] = {"conv6", "conv5", "conv4", "conv3", "conv2", "conv1"};
  for (int i = 0; i < 6; ++i) {
    const auto& cat = s.layer("deconv" + std::to_string(i + 2) + "_cat");
    ASSERT_TRUE(cat.skip_source.has_value());
    EXPECT_EQ(cat.skip_source->substr(0, cat.skip_source->find('_')), sources[i]);
  }
  EXPECT_EQ(s.layer("conv6").stride, 1);
  EXPECT_EQ(s.layer("conv7").out_channels, 2048);
}

TEST(ModelSpec, UnetSkips) {
  const ModelSpec s = make_spec(ArchId::unet);
  EXPECT_EQ(s.layer("conv11").in_channels, 512 + 512);
  EXPECT_EQ(s.layer("conv13").in_channels, 256 + 256);
  EXPECT_EQ(s.layer("conv15").in_channels, 128 + 128);
  EXPECT_EQ(s.layer("conv17").in_channels, 64 + 64);
  EXPECT_EQ(s.layer("conv17").out_channels, 64);
  EXPECT_EQ(s.layer("output").in_channels, 64);
  EXPECT_EQ(s.layer("output").out_channels, 21);
  const std::pair<const char*, const char*> wiring[] = {
      {"conv11_cat", "conv8"}, {"conv13_cat", "conv6"}, {"conv15_cat", "conv4"}, {"conv17_cat", "conv2"}};
  for (const auto& [cat, src] : wiring) {
    const auto& l = s.layer(cat);
    EXPECT_EQ(l.skip_source->substr(0, l.skip_source->find('_')), src);
  }
  const auto sizes = validate_spec(s);
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    if (s.layers[i].name == "conv9") {
      EXPECT_EQ(sizes[i], 14);
    }
  }
}

TEST(ModelSpec, TransferPlan) {
  const ModelSpec s = make_spec(ArchId::transfer_resnet34);
  EXPECT_EQ(s.frozen_prefix, (std::vector<std::string>{"resnet34"}));
  EXPECT_EQ(s.layers.front().kind, LayerKind::backbone);
  EXPECT_EQ(s.layers.front().out_channels, 512);
  EXPECT_EQ(channel_ladder(s, LayerKind::transposed_conv),
            (Ladder{{512, 512}, {512, 256}, {256, 128}, {128, 64}, {64, 32}}));
  EXPECT_EQ(s.layer("classifier").in_channels, 32);
}

TEST(ModelSpec, BatchNormOrderPerArchitecture) {
  auto follows = [](const ModelSpec& s, const std::string& a, const std::string& b) {
    for (std::size_t i = 0; i + 1 < s.layers.size(); ++i)
      if (s.layers[i].name == a) return s.layers[i + 1].name == b;
    return false;
  };
  EXPECT_TRUE(follows(make_spec(ArchId::fcn_baseline), "conv1_bn", "conv1_relu"));
  EXPECT_TRUE(follows(make_spec(ArchId::advanced_fcn), "deconv3_bn", "deconv3_relu"));
  EXPECT_TRUE(follows(make_spec(ArchId::transfer_resnet34), "deconv2_relu", "deconv2_bn"));
  EXPECT_TRUE(follows(make_spec(ArchId::unet), "conv3_relu", "conv3_bn"));
}

TEST(ModelSpec, ValidationNamesLayers) {
  ModelSpec s = make_spec(ArchId::unet);
  for (auto& l : s.layers)
    if (l.name == "conv13") l.in_channels = 500;
  try {
    validate_spec(s);
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("conv13"), std::string::npos) << e.what();
  }
  s = make_spec(ArchId::advanced_fcn);
  for (auto& l : s.layers)
    if (l.name == "deconv3_cat") l.skip_source = "conv3_relu";  // 56px joined onto 14px
  try {
    validate_spec(s);
    FAIL();
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("deconv3_cat"), std::string::npos) << e.what();
  }
  s = make_spec(ArchId::fcn_baseline);
  s.frozen_prefix = {"conv1"};
  EXPECT_THROW(validate_spec(s), ModelError);
  EXPECT_THROW(parse_arch("vgg16"), ConfigError);
}

TEST(Model, ForwardShapes) {
  torch::NoGradGuard guard;
  for (auto arch : {ArchId::fcn_baseline, ArchId::transfer_resnet34, ArchId::unet}) {
    SegNet m = build_model(arch);
    m->eval();
    for (int b : {1, 2}) {
      const auto y = m->forward(torch::rand({b, 3, 224, 224}));
      EXPECT_EQ(y.sizes(), (c10::IntArrayRef{b, 21, 224, 224})) << to_string(arch);
    }
  }
  SegNet t = build_model(ArchId::transfer_resnet34);
  t->eval();
  EXPECT_EQ(t->backbone_features(torch::rand({2, 3, 224, 224})).sizes(), (c10::IntArrayRef{2, 512, 7, 7}));
}

TEST(Model, RejectsBadInput) {
  SegNet m = build_model(ArchId::fcn_baseline);
  EXPECT_THROW(m->forward(torch::rand({1, 1, 224, 224})), ModelError);
  EXPECT_THROW(m->forward(torch::rand({1, 3, 100, 100})), ModelError);
  EXPECT_THROW(m->forward(torch::rand({3, 224, 224})), ModelError);
}

TEST(Model, ParameterCounts) {
  SegNet m = build_model(ArchId::fcn_baseline);
  auto params = m->named_parameters();
  EXPECT_EQ(params["conv1.weight"].numel(), 864);
  EXPECT_EQ(params["conv1.bias"].numel(), 32);
  EXPECT_EQ(params["conv6.weight"].numel() + params["conv6.bias"].numel(), 693);

  // whole baseline by channel arithmetic: convs + deconvs (+bias) + BN pairs + classifier
  const int enc[] = {3, 32, 64, 128, 256, 512};
  const int dec[] = {512, 512, 256, 128, 64, 32};
  std::int64_t expected = 693;
  for (int i = 0; i < 5; ++i) {
    expected += enc[i] * enc[i + 1] * 9 + enc[i + 1] + 2 * enc[i + 1];
    expected += dec[i] * dec[i + 1] * 9 + dec[i + 1] + 2 * dec[i + 1];
  }
  const ParamCount c = param_count(m);
  EXPECT_EQ(c.total, expected);
  EXPECT_EQ(c.trainable, expected);
}

TEST(Model, FreezeTransferEncoder) {
  SegNet m = build_model(ArchId::transfer_resnet34);
  const ParamCount before = param_count(m);
  freeze_encoder(m);
  const ParamCount after = param_count(m);
  EXPECT_EQ(before.total, after.total);
  EXPECT_LT(after.trainable, after.total);
  std::int64_t backbone = 0;
  for (const auto& p : m->backbone().parameters()) backbone += p.numel();
  EXPECT_EQ(backbone, 21284672);  // torchvision resnet34 minus its 513000-parameter fc head
  EXPECT_EQ(after.trainable, after.total - backbone);
  for (const auto& [name, trainable] : m->trainable_mask()) {
    EXPECT_EQ(trainable, name.rfind("resnet34.", 0) != 0) << name;
  }
  m->train();
  EXPECT_FALSE(m->backbone().is_training());
  EXPECT_TRUE(m->layer_module("deconv1").is_training());
  SegNet b = build_model(ArchId::unet);
  EXPECT_THROW(freeze_encoder(b), ModelError);
}

TEST(Init, BoundsAndBatchNorm) {
  EXPECT_DOUBLE_EQ(init_bound({.name = "x", .kind = LayerKind::conv, .in_channels = 1, .out_channels = 4, .kernel = 3}), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(init_bound({.name = "x", .kind = LayerKind::conv, .in_channels = 100, .out_channels = 4, .kernel = 1}), 0.1);
  for (auto arch : {ArchId::fcn_baseline, ArchId::unet, ArchId::transfer_resnet34}) {
    SegNet m = build_model(arch);
    xavier_init(m, 1);
    for (const auto& l : m->spec().layers) {
      if (l.kind == LayerKind::conv || l.kind == LayerKind::transposed_conv) {
        auto p = m->layer_module(l.name).named_parameters(false);
        const double bound = 1.0 / std::sqrt(double(l.in_channels) * l.kernel * l.kernel);
        EXPECT_LE(p["weight"].abs().max().item<double>(), bound) << l.name;
        // a uniform sample this large reaches close to the bound
        if (p["weight"].numel() > 500) {
          EXPECT_GT(p["weight"].abs().max().item<double>(), 0.9 * bound) << l.name;
        }
        EXPECT_LT(p["bias"].abs().max().item<double>(), 10 * kBiasInitStd) << l.name;
      } else if (l.kind == LayerKind::batchnorm) {
        auto p = m->layer_module(l.name).named_parameters(false);
        EXPECT_TRUE(torch::equal(p["weight"], torch::ones_like(p["weight"]))) << l.name;
        EXPECT_TRUE(torch::equal(p["bias"], torch::zeros_like(p["bias"]))) << l.name;
      }
    }
  }
}

TEST(Init, SeededAndLeavesBackboneAlone) {
  SegNet a = build_model(ArchId::transfer_resnet34), b = build_model(ArchId::transfer_resnet34);
  const auto backbone_before = a->backbone().named_parameters()["layer1.0.conv1.weight"].clone();
  xavier_init(a, 42);
  xavier_init(b, 42);
  auto pa = a->named_parameters(), pb = b->named_parameters();
  for (const auto& p : pa) {
    if (p.key().rfind("resnet34.", 0) == 0) continue;
    EXPECT_TRUE(torch::equal(p.value(), pb[p.key()])) << p.key();
  }
  EXPECT_TRUE(torch::equal(a->backbone().named_parameters()["layer1.0.conv1.weight"], backbone_before));
  SegNet c = build_model(ArchId::fcn_baseline), d = build_model(ArchId::fcn_baseline);
  xavier_init(c, 1);
  xavier_init(d, 2);
  EXPECT_FALSE(torch::equal(c->named_parameters()["conv3.weight"], d->named_parameters()["conv3.weight"]));
}

TEST(Backbone, TorchvisionParameterNames) {
  SegNet m = build_model(ArchId::transfer_resnet34);
  auto names = m->backbone().named_parameters();
  for (const char* n : {"conv1.weight", "bn1.weight", "layer1.0.conv1.weight", "layer2.0.downsample.0.weight",
                        "layer2.0.downsample.1.bias", "layer3.5.bn2.weight", "layer4.2.conv2.weight"}) {
    EXPECT_TRUE(names.contains(n)) << n;
  }
  EXPECT_FALSE(names.contains("fc.weight"));
  EXPECT_TRUE(m->backbone().named_buffers().contains("layer4.2.bn2.running_var"));
}

TEST(Backbone, MissingWeightsFileIsConfigError) {
  SegNet m = build_model(ArchId::transfer_resnet34);
  EXPECT_THROW(load_backbone_weights(m, "/nonexistent/resnet34.pt"), ConfigError);
  SegNet b = build_model(ArchId::fcn_baseline);
  EXPECT_THROW(load_backbone_weights(b, "/nonexistent/resnet34.pt"), ModelError);
}
