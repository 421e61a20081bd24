#include "vocseg/model_zoo.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "vocseg/errors.hpp"
#include "vocseg/resnet.hpp"

namespace vocseg {
namespace nn = torch::nn;

std::string_view to_string(ArchId arch) {
  switch (arch) {
    case ArchId::fcn_baseline: return "fcn_baseline";
    case ArchId::advanced_fcn: return "advanced_fcn";
    case ArchId::transfer_resnet34: return "transfer_resnet34";
    case ArchId::unet: return "unet";
  }
  return "unknown";
}

ArchId parse_arch(std::string_view name) {
  for (ArchId a : {ArchId::fcn_baseline, ArchId::advanced_fcn, ArchId::transfer_resnet34, ArchId::unet}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::transposed_conv: return "transposed_conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::activation: return "activation";
    case LayerKind::concat_skip: return "concat_skip";
    case LayerKind::backbone: return "backbone";
  }
  return "unknown";
}

const LayerPlan& ModelSpec::layer(std::string_view name) const {
  auto it = std::find_if(layers.begin(), layers.end(), [&](const LayerPlan& l) { return l.name == name; });
  if (it == layers.end()) throw ModelError("no layer named '" + std::string(name) + "'");
  return *it;
}

namespace {

enum class NormOrder { bn_then_relu, relu_then_bn };

class PlanBuilder {
 public:
  explicit PlanBuilder(ModelSpec& spec) : spec_(spec) {}

  void conv(const std::string& name, int in, int out, int k, int s, int p) {
    spec_.layers.push_back({name, LayerKind::conv, in, out, k, s, p, 0, std::nullopt});
  }
  void deconv(const std::string& name, int in, int out, int k, int s, int p) {
    // Stride-2 3x3/pad-1 deconvolutions need one row/column of output
    // padding to land exactly on 2H.
    const int output_padding = (s == 2 && k == 3 && p == 1) ? 1 : 0;
    spec_.layers.push_back({name, LayerKind::transposed_conv, in, out, k, s, p, output_padding, std::nullopt});
  }
  void norm_act(const std::string& name, int channels, NormOrder order) {
    const LayerPlan bn{name + "_bn", LayerKind::batchnorm, channels, channels, 0, 1, 0, 0, std::nullopt};
    const LayerPlan relu{name + "_relu", LayerKind::activation, channels, channels, 0, 1, 0, 0, std::nullopt};
    if (order == NormOrder::bn_then_relu) {
      spec_.layers.push_back(bn);
      spec_.layers.push_back(relu);
    } else {
      spec_.layers.push_back(relu);
      spec_.layers.push_back(bn);
    }
  }
  void conv_block(const std::string& name, int in, int out, int k, int s, int p, NormOrder order) {
    conv(name, in, out, k, s, p);
    norm_act(name, out, order);
  }
  void deconv_block(const std::string& name, int in, int out, int k, int s, int p, NormOrder order) {
    deconv(name, in, out, k, s, p);
    norm_act(name, out, order);
  }
  void pool(const std::string& name, int channels) {
    spec_.layers.push_back({name, LayerKind::maxpool, channels, channels, 2, 2, 0, 0, std::nullopt});
  }
  void concat(const std::string& name, int running, int skip_channels, const std::string& source) {
    spec_.layers.push_back(
        {name, LayerKind::concat_skip, running, running + skip_channels, 0, 1, 0, 0, source});
  }

 private:
  ModelSpec& spec_;
};

void plan_fcn_baseline(PlanBuilder& b, int num_classes) {
  constexpr auto order = NormOrder::bn_then_relu;
  const int enc[] = {3, 32, 64, 128, 256, 512};
  for (int i = 0; i < 5; ++i) b.conv_block("conv" + std::to_string(i + 1), enc[i], enc[i + 1], 3, 2, 1, order);
  const int dec[] = {512, 512, 256, 128, 64, 32};
  for (int i = 0; i < 5; ++i) b.deconv_block("deconv" + std::to_string(i + 1), dec[i], dec[i + 1], 3, 2, 1, order);
  b.conv("conv6", 32, num_classes, 1, 1, 0);
}

void plan_advanced_fcn(PlanBuilder& b, int num_classes) {
  constexpr auto order = NormOrder::bn_then_relu;
  const int enc[] = {3, 32, 64, 128, 256, 512, 1024, 2048};
  for (int i = 0; i < 7; ++i) {
    b.conv_block("conv" + std::to_string(i + 1), enc[i], enc[i + 1], 3, i < 5 ? 2 : 1, 1, order);
  }
  b.deconv_block("deconv1", 2048, 2048, 3, 1, 1, order);
  // deconv2..deconv7 take the previous deconv output concatenated with
  // conv6..conv1 respectively.
  int running = 2048;
  const int out[] = {1024, 512, 256, 128, 64, 32};
  for (int i = 0; i < 6; ++i) {
    const int conv_index = 6 - i;
    const std::string name = "deconv" + std::to_string(i + 2);
    b.concat(name + "_cat", running, enc[conv_index], "conv" + std::to_string(conv_index) + "_relu");
    b.deconv_block(name, running + enc[conv_index], out[i], 3, i < 1 ? 1 : 2, 1, order);
    running = out[i];
  }
  b.conv("classifier", 32, num_classes, 1, 1, 0);
}

void plan_transfer(PlanBuilder& b, ModelSpec& spec, int num_classes) {
  constexpr auto order = NormOrder::relu_then_bn;
  spec.layers.push_back({"resnet34", LayerKind::backbone, 3, 512, 0, 32, 0, 0, std::nullopt});
  spec.frozen_prefix = {"resnet34"};
  const int dec[] = {512, 512, 256, 128, 64, 32};
  for (int i = 0; i < 5; ++i) b.deconv_block("deconv" + std::to_string(i + 1), dec[i], dec[i + 1], 3, 2, 1, order);
  b.conv("classifier", 32, num_classes, 1, 1, 0);
}

void plan_unet(PlanBuilder& b, int num_classes) {
  constexpr auto order = NormOrder::relu_then_bn;
  // contracting path: conv(2i+1), conv(2i+2), pool(i+1)
  const int widths[] = {64, 128, 256, 512};
  int in = 3;
  for (int i = 0; i < 4; ++i) {
    b.conv_block("conv" + std::to_string(2 * i + 1), in, widths[i], 3, 1, 1, order);
    b.conv_block("conv" + std::to_string(2 * i + 2), widths[i], widths[i], 3, 1, 1, order);
    b.pool("pool" + std::to_string(i + 1), widths[i]);
    in = widths[i];
  }
  b.conv_block("conv9", 512, 1024, 3, 1, 1, order);
  b.conv_block("conv10", 1024, 1024, 3, 1, 1, order);
  // expanding path: deconv, concat with conv8/conv6/conv4/conv2, two convs
  int running = 1024;
  for (int i = 0; i < 4; ++i) {
    const int width = widths[3 - i];
    const int first = 11 + 2 * i;
    const std::string skip = "conv" + std::to_string(8 - 2 * i) + "_bn";
    b.deconv_block("deconv" + std::to_string(i + 1), running, width, 2, 2, 0, order);
    b.concat("conv" + std::to_string(first) + "_cat", width, width, skip);
    b.conv_block("conv" + std::to_string(first), 2 * width, width, 3, 1, 1, order);
    b.conv_block("conv" + std::to_string(first + 1), width, width, 3, 1, 1, order);
    running = width;
  }
  b.conv("output", 64, num_classes, 1, 1, 0);
}

int conv_out(int size, int k, int s, int p) { return (size + 2 * p - k) / s + 1; }

}  // namespace

ModelSpec make_spec(ArchId arch, int num_classes) {
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  ModelSpec spec;
  spec.arch = arch;
  spec.num_classes = num_classes;
  PlanBuilder b(spec);
  switch (arch) {
    case ArchId::fcn_baseline: plan_fcn_baseline(b, num_classes); break;
    case ArchId::advanced_fcn: plan_advanced_fcn(b, num_classes); break;
    case ArchId::transfer_resnet34: plan_transfer(b, spec, num_classes); break;
    case ArchId::unet: plan_unet(b, num_classes); break;
  }
  return spec;
}

std::vector<int> validate_spec(const ModelSpec& spec, int input_size) {
  if (spec.layers.empty()) throw ModelError("empty layer plan");
  const bool is_transfer = spec.arch == ArchId::transfer_resnet34;
  if (is_transfer == spec.frozen_prefix.empty()) {
    throw ModelError("frozen_prefix must be set exactly for the transfer architecture");
  }

  std::unordered_map<std::string, std::pair<int, int>> produced;  // name -> (channels, size)
  std::vector<int> sizes;
  int channels = 3;
  int size = input_size;
  std::string previous = "input";
  for (const LayerPlan& l : spec.layers) {
    if (produced.count(l.name)) throw ModelError("duplicate layer name '" + l.name + "'");
    if (l.in_channels != channels) {
      throw ModelError("layer '" + l.name + "' expects " + std::to_string(l.in_channels) + " channels but '" +
                       previous + "' produces " + std::to_string(channels));
    }
    switch (l.kind) {
      case LayerKind::conv:
        size = conv_out(size, l.kernel, l.stride, l.padding);
        break;
      case LayerKind::transposed_conv:
        size = (size - 1) * l.stride - 2 * l.padding + l.kernel + l.output_padding;
        break;
      case LayerKind::maxpool:
        size = conv_out(size, l.kernel, l.stride, l.padding);
        [[fallthrough]];
      case LayerKind::batchnorm:
      case LayerKind::activation:
        if (l.out_channels != l.in_channels) throw ModelError("layer '" + l.name + "' must preserve channels");
        break;
      case LayerKind::concat_skip: {
        if (!l.skip_source) throw ModelError("concat layer '" + l.name + "' has no skip source");
        auto it = produced.find(*l.skip_source);
        if (it == produced.end()) {
          throw ModelError("concat layer '" + l.name + "' refers to unknown or later layer '" + *l.skip_source + "'");
        }
        const auto [skip_channels, skip_size] = it->second;
        if (l.out_channels != channels + skip_channels) {
          throw ModelError("concat layer '" + l.name + "' declares " + std::to_string(l.out_channels) +
                           " channels but '" + previous + "' (" + std::to_string(channels) + ") + '" +
                           *l.skip_source + "' (" + std::to_string(skip_channels) + ") give " +
                           std::to_string(channels + skip_channels));
        }
        if (skip_size != size) {
          throw ModelError("concat layer '" + l.name + "' joins '" + previous + "' at " + std::to_string(size) +
                           "px with '" + *l.skip_source + "' at " + std::to_string(skip_size) + "px");
        }
        break;
      }
      case LayerKind::backbone:
        // ResNet stem (conv s2, pool s2) and three stride-2 stages, each ceil(n/2).
        for (int i = 0; i < 5; ++i) size = (size - 1) / 2 + 1;
        break;
    }
    if (size < 1) throw ModelError("layer '" + l.name + "' collapses the feature map");
    channels = l.out_channels;
    produced[l.name] = {channels, size};
    sizes.push_back(size);
    previous = l.name;
  }
  if (channels != spec.num_classes) {
    throw ModelError("final layer '" + previous + "' emits " + std::to_string(channels) + " channels, expected " +
                     std::to_string(spec.num_classes));
  }
  if (size != input_size) {
    throw ModelError("final layer '" + previous + "' emits " + std::to_string(size) + "px for a " +
                     std::to_string(input_size) + "px input");
  }
  return sizes;
}

SegNetImpl::SegNetImpl(ModelSpec spec) : spec_(std::move(spec)) {
  spatial_ = validate_spec(spec_);
  std::set<std::string> sources;
  for (const LayerPlan& l : spec_.layers) {
    if (l.skip_source) sources.insert(*l.skip_source);
  }
  saved_outputs_.assign(sources.begin(), sources.end());

  for (const LayerPlan& l : spec_.layers) {
    switch (l.kind) {
      case LayerKind::conv:
        layers_.emplace(l.name, nn::AnyModule(register_module(
                                    l.name, nn::Conv2d(nn::Conv2dOptions(l.in_channels, l.out_channels, l.kernel)
                                                           .stride(l.stride)
                                                           .padding(l.padding)))));
        break;
      case LayerKind::transposed_conv:
        layers_.emplace(l.name, nn::AnyModule(register_module(
                                    l.name, nn::ConvTranspose2d(
                                                nn::ConvTranspose2dOptions(l.in_channels, l.out_channels, l.kernel)
                                                    .stride(l.stride)
                                                    .padding(l.padding)
                                                    .output_padding(l.output_padding)))));
        break;
      case LayerKind::maxpool:
        layers_.emplace(l.name, nn::AnyModule(register_module(
                                    l.name, nn::MaxPool2d(nn::MaxPool2dOptions(l.kernel).stride(l.stride)))));
        break;
      case LayerKind::batchnorm:
        layers_.emplace(l.name, nn::AnyModule(register_module(l.name, nn::BatchNorm2d(l.out_channels))));
        break;
      case LayerKind::activation:
        layers_.emplace(l.name, nn::AnyModule(register_module(l.name, nn::ReLU())));
        break;
      case LayerKind::concat_skip:
        break;
      case LayerKind::backbone:
        backbone_ = nn::AnyModule(register_module(l.name, ResNet34()));
        input_mean_ = register_buffer(
            "input_mean", torch::tensor({kImagenetMean[0], kImagenetMean[1], kImagenetMean[2]}).view({1, 3, 1, 1}));
        input_std_ = register_buffer(
            "input_std", torch::tensor({kImagenetStd[0], kImagenetStd[1], kImagenetStd[2]}).view({1, 3, 1, 1}));
        break;
    }
  }
}

torch::nn::Module& SegNetImpl::layer_module(const std::string& name) {
  if (has_backbone() && spec_.layer(name).kind == LayerKind::backbone) return backbone();
  auto it = layers_.find(name);
  if (it == layers_.end()) throw ModelError("layer '" + name + "' has no module");
  return *it->second.ptr();
}

torch::nn::Module& SegNetImpl::backbone() {
  if (backbone_.is_empty()) throw ModelError("architecture has no backbone");
  return *backbone_.ptr();
}

torch::Tensor SegNetImpl::backbone_features(const torch::Tensor& images) {
  if (backbone_.is_empty()) throw ModelError("architecture has no backbone");
  return backbone_.forward((images - input_mean_) / input_std_);
}

torch::Tensor SegNetImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ModelError("expected (B, 3, H, W) input, got " + c10::str(images.sizes()));
  }
  if (images.size(2) % 32 != 0 || images.size(3) % 32 != 0) {
    throw ModelError("input height and width must be multiples of 32, got " + c10::str(images.sizes()));
  }
  std::unordered_map<std::string, torch::Tensor> saved;
  torch::Tensor x = images;
  for (const LayerPlan& l : spec_.layers) {
    if (l.kind == LayerKind::concat_skip) {
      const torch::Tensor& skip = saved.at(*l.skip_source);
      if (skip.size(2) != x.size(2) || skip.size(3) != x.size(3)) {
        throw ModelError("concat '" + l.name + "': spatial mismatch " + c10::str(x.sizes()) + " vs '" +
                         *l.skip_source + "' " + c10::str(skip.sizes()));
      }
      x = torch::cat({x, skip}, 1);
    } else if (l.kind == LayerKind::backbone) {
      x = backbone_features(x);
    } else {
      x = layers_.at(l.name).forward(x);
    }
    if (std::binary_search(saved_outputs_.begin(), saved_outputs_.end(), l.name)) saved.emplace(l.name, x);
  }
  return x;
}

void SegNetImpl::set_encoder_frozen(bool frozen) {
  if (backbone_.is_empty()) throw ModelError("only the transfer architecture has a frozen encoder");
  for (auto& p : backbone_.ptr()->parameters()) p.set_requires_grad(!frozen);
  encoder_frozen_ = frozen;
  train(is_training());
}

void SegNetImpl::train(bool on) {
  torch::nn::Module::train(on);
  if (encoder_frozen_ && !backbone_.is_empty()) backbone_.ptr()->eval();
}

std::map<std::string, bool> SegNetImpl::trainable_mask() const {
  std::map<std::string, bool> mask;
  for (const auto& p : named_parameters()) mask[p.key()] = p.value().requires_grad();
  return mask;
}

SegNet build_model(const ModelSpec& spec) { return SegNet(spec); }

SegNet build_model(ArchId arch, int num_classes) { return SegNet(make_spec(arch, num_classes)); }

double init_bound(const LayerPlan& layer) {
  return 1.0 / std::sqrt(static_cast<double>(layer.in_channels) * layer.kernel * layer.kernel);
}

void xavier_init(SegNet& model, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::detail::createCPUGenerator(seed);
  const ModelSpec& spec = model->spec();
  for (const LayerPlan& l : spec.layers) {
    if (std::find(spec.frozen_prefix.begin(), spec.frozen_prefix.end(), l.name) != spec.frozen_prefix.end()) {
      continue;
    }
    const bool is_conv = l.kind == LayerKind::conv || l.kind == LayerKind::transposed_conv;
    if (!is_conv && l.kind != LayerKind::batchnorm) continue;
    auto params = model->layer_module(l.name).named_parameters(/*recurse=*/false);
    if (is_conv) {
      // float32 rounding of the bound must not push samples past 1/sqrt(n)
      float bound = static_cast<float>(init_bound(l));
      if (bound > init_bound(l)) bound = std::nextafter(bound, 0.0f);
      params["weight"].uniform_(-bound, bound, gen);
      if (params.contains("bias")) params["bias"].normal_(0.0, kBiasInitStd, gen);
    } else if (l.kind == LayerKind::batchnorm) {
      params["weight"].fill_(1.0);
      params["bias"].zero_();
    }
  }
}

void freeze_encoder(SegNet& model) {
  if (model->spec().arch != ArchId::transfer_resnet34) {
    throw ModelError("freeze_encoder called on " + std::string(to_string(model->spec().arch)) +
                     "; only transfer_resnet34 has a pretrained encoder");
  }
  model->set_encoder_frozen(true);
}

void load_backbone_weights(SegNet& model, const std::filesystem::path& path) {
  if (!model->has_backbone()) throw ModelError("architecture has no backbone to load weights into");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open backbone weights " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  c10::IValue loaded;
  try {
    loaded = torch::pickle_load(bytes);
  } catch (const c10::Error& e) {
    throw DataError("cannot parse backbone weights " + path.string() + ": " + e.what_without_backtrace());
  }
  if (!loaded.isGenericDict()) {
    throw DataError("backbone weights " + path.string() +
                    " must be a plain dict of tensors (convert with tools/convert_resnet34.py)");
  }
  std::unordered_map<std::string, torch::Tensor> state;
  for (const auto& kv : loaded.toGenericDict()) state.emplace(kv.key().toStringRef(), kv.value().toTensor());

  torch::NoGradGuard no_grad;
  auto& backbone = model->backbone();
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    auto it = state.find(name);
    if (it == state.end()) throw DataError("backbone weights lack '" + name + "'");
    if (it->second.sizes() != target.sizes()) {
      throw DataError("backbone weight '" + name + "' has shape " + c10::str(it->second.sizes()) + ", expected " +
                      c10::str(target.sizes()));
    }
    target.copy_(it->second);
  };
  for (auto& p : backbone.named_parameters()) assign(p.key(), p.value());
  for (auto& b : backbone.named_buffers()) assign(b.key(), b.value());
}

ParamCount param_count(const SegNet& model) {
  ParamCount count;
  for (const auto& p : model->parameters()) {
    count.total += p.numel();
    if (p.requires_grad()) count.trainable += p.numel();
  }
  return count;
}

}  // namespace vocseg
