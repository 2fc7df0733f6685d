#pragma once

#include <vector>

#include <torch/torch.h>

#include "yctnet/config.hpp"
#include "yctnet/layers.hpp"

namespace yct {

/// X_L: the input with its channel axis tiled three times, C -> 3C, giving
/// channel order [a, b, a, b, a, b] for a two-channel input.
torch::Tensor prepare_local_input(const torch::Tensor& x);

/// Convolutional branch. Implementations return one FeatureMap per retained
/// stage, ordered from shallow to deep.
class LocalEncoder : public torch::nn::Module {
 public:
  virtual std::vector<FeatureMap> forward(const torch::Tensor& x_local, ShapeTrace* trace = nullptr) = 0;
  virtual std::vector<int> stages() const = 0;
  virtual int64_t channels(int stage) const = 0;
};

/// Pruned ResNet-3D: a two-layer strided stem replaces the 7x7 stage 1, then
/// stages 2..(1 + block_counts.size()) of basic residual blocks. Stage i runs
/// at input / 2^i with base_channels * 2^(i-1) channels.
class ResNet3dEncoder final : public LocalEncoder {
 public:
  explicit ResNet3dEncoder(const ModelConfig& cfg);

  std::vector<FeatureMap> forward(const torch::Tensor& x_local, ShapeTrace* trace = nullptr) override;
  std::vector<int> stages() const override;
  int64_t channels(int stage) const override;

  void zero_init_residuals();

  ConvNormAct stem1{nullptr}, stem2{nullptr};
  std::vector<torch::nn::Sequential> stage_blocks;

 private:
  int base_channels_;
  int first_stage_ = 2;
};

}  // namespace yct
