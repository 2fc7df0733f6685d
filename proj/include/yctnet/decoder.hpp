#pragma once

#include <vector>

#include <torch/torch.h>

#include "yctnet/config.hpp"
#include "yctnet/layers.hpp"

namespace yct {

struct DecoderInputs {
  torch::Tensor bottleneck;  // level 4: F_G4 (or its mixed version)
  torch::Tensor skip3;       // level 3: F_mix33 or F_G3
  torch::Tensor skip2;       // level 2: F_mix22 or F_G2
  torch::Tensor skip1;       // level 1: F_G1 (or mixed)
  torch::Tensor input;       // raw volume X
};

/// Bottleneck residual block, then four levels of
/// transposed-conv x2 -> concat skip -> residual block, where the last
/// level's skip is a conv/IN/ReLU embedding of the raw input. A 1x1x1 conv
/// maps to class logits.
class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ModelConfig& cfg);
  torch::Tensor forward(const DecoderInputs& in, ShapeTrace* trace = nullptr);

  void zero_init_residuals();

  ResidualBlock bottleneck{nullptr};
  std::vector<torch::nn::ConvTranspose3d> ups;
  std::vector<ResidualBlock> blocks;
  ConvNormAct input_residual{nullptr};
  torch::nn::Conv3d head{nullptr};
};
TORCH_MODULE(Decoder);

/// Argmax over the class axis (dim 0 for [J, ...], dim 1 for [N, J, ...]).
/// Ties resolve to the lowest class index.
torch::Tensor predict_labels(const torch::Tensor& probabilities);

}  // namespace yct
