#include "vocseg/resnet.hpp"

#include <torch/torch.h>

namespace vocseg {
namespace nn = torch::nn;

namespace {

nn::Conv2d conv3x3(int in, int out, int stride) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

nn::Sequential make_stage(int in, int out, int blocks, int stride) {
  nn::Sequential stage;
  stage->push_back(BasicBlock(in, out, stride));
  for (int i = 1; i < blocks; ++i) stage->push_back(BasicBlock(out, out, 1));
  return stage;
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(int in_channels, int out_channels, int stride) {
  conv1 = register_module("conv1", conv3x3(in_channels, out_channels, stride));
  bn1 = register_module("bn1", nn::BatchNorm2d(out_channels));
  conv2 = register_module("conv2", conv3x3(out_channels, out_channels, 1));
  bn2 = register_module("bn2", nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    downsample = register_module(
        "downsample",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)),
                       nn::BatchNorm2d(out_channels)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1(conv1(x)));
  out = bn2(conv2(out));
  auto identity = downsample ? downsample->forward(x) : x;
  return torch::relu(out + identity);
}

ResNet34Impl::ResNet34Impl() {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, 64, 7).stride(2).padding(3).bias(false)));
  bn1 = register_module("bn1", nn::BatchNorm2d(64));
  layer1 = register_module("layer1", make_stage(64, 64, 3, 1));
  layer2 = register_module("layer2", make_stage(64, 128, 4, 2));
  layer3 = register_module("layer3", make_stage(128, 256, 6, 2));
  layer4 = register_module("layer4", make_stage(256, 512, 3, 2));
}

torch::Tensor ResNet34Impl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1(conv1(x)));
  out = torch::max_pool2d(out, 3, 2, 1);
  out = layer1->forward(out);
  out = layer2->forward(out);
  out = layer3->forward(out);
  return layer4->forward(out);
}

}  // namespace vocseg
