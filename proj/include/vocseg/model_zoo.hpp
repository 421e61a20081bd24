#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/nn/module.h>
#include <torch/nn/modules/container/any.h>
#include <torch/nn/pimpl.h>

#include "vocseg/palette.hpp"

namespace vocseg {

enum class ArchId { fcn_baseline, advanced_fcn, transfer_resnet34, unet };

std::string_view to_string(ArchId arch);
/// Throws ConfigError for unrecognised names.
ArchId parse_arch(std::string_view name);

enum class LayerKind { conv, transposed_conv, maxpool, batchnorm, activation, concat_skip, backbone };

std::string_view to_string(LayerKind kind);

/// One row of an architecture plan. For concat_skip rows, in_channels is the
/// running tensor's channel count and out_channels the concatenated total;
/// skip_source names the layer whose output is appended.
struct LayerPlan {
  std::string name;
  LayerKind kind = LayerKind::conv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  int output_padding = 0;
  std::optional<std::string> skip_source;
};

struct ModelSpec {
  ArchId arch = ArchId::fcn_baseline;
  int num_classes = kNumClasses;
  std::vector<LayerPlan> layers;
  /// Layers whose parameters are pretrained and never initialised here.
  std::vector<std::string> frozen_prefix;

  const LayerPlan& layer(std::string_view name) const;
};

/// Layer plan of one of the four architectures.
ModelSpec make_spec(ArchId arch, int num_classes = kNumClasses);

/// Spatial size after every layer for a square `input_size` input. Throws
/// ModelError naming the layers on any channel or spatial mismatch,
/// including concatenations of unequal spatial size.
std::vector<int> validate_spec(const ModelSpec& spec, int input_size = 224);

/// Executes a ModelSpec: per-pixel class logits at input resolution.
class SegNetImpl : public torch::nn::Module {
 public:
  explicit SegNetImpl(ModelSpec spec);

  /// (B, 3, H, W) -> (B, num_classes, H, W) logits.
  torch::Tensor forward(const torch::Tensor& images);

  /// Output of the backbone (transfer architecture only), used for checks.
  torch::Tensor backbone_features(const torch::Tensor& images);

  const ModelSpec& spec() const { return spec_; }
  torch::nn::Module& layer_module(const std::string& name);
  bool has_backbone() const { return !backbone_.is_empty(); }
  torch::nn::Module& backbone();

  bool encoder_frozen() const { return encoder_frozen_; }
  void set_encoder_frozen(bool frozen);

  /// Frozen backbones stay in inference mode so their batch-norm statistics
  /// are preserved too.
  void train(bool on = true) override;

  /// Parameter name -> receives updates.
  std::map<std::string, bool> trainable_mask() const;

 private:
  ModelSpec spec_;
  std::vector<int> spatial_;
  std::map<std::string, torch::nn::AnyModule> layers_;
  std::vector<std::string> saved_outputs_;
  torch::nn::AnyModule backbone_;
  torch::Tensor input_mean_;
  torch::Tensor input_std_;
  bool encoder_frozen_ = false;
};
TORCH_MODULE(SegNet);

SegNet build_model(ArchId arch, int num_classes = kNumClasses);
SegNet build_model(const ModelSpec& spec);

/// Conv and transposed-conv weights ~ U(-1/sqrt(n), 1/sqrt(n)) with
/// n = in_channels * kernel^2; biases ~ N(0, kBiasInitStd); batch-norm
/// scale 1, shift 0. Pretrained backbone layers are left untouched.
inline constexpr double kBiasInitStd = 0.01;
void xavier_init(SegNet& model, std::uint64_t seed);

/// Bound used by xavier_init for a given plan row.
double init_bound(const LayerPlan& layer);

/// Stop updates to the backbone. Only valid for transfer_resnet34.
void freeze_encoder(SegNet& model);

/// Load torchvision-named ResNet34 weights (a plain dict of tensors written
/// with torch.save; see tools/convert_resnet34.py). The fc.* entries are ignored.
void load_backbone_weights(SegNet& model, const std::filesystem::path& path);

struct ParamCount {
  std::int64_t total = 0;
  std::int64_t trainable = 0;
};
ParamCount param_count(const SegNet& model);

/// ImageNet channel statistics applied in front of the pretrained backbone.
inline constexpr float kImagenetMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kImagenetStd[3] = {0.229f, 0.224f, 0.225f};

}  // namespace vocseg
