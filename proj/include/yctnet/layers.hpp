#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "yctnet/volume.hpp"

namespace yct {

enum class Branch { local, global, mixed };

/// Intermediate activation tagged with its pyramid stage.
struct FeatureMap {
  torch::Tensor data;  // [N, Ch, d, h, w]
  int stage = 0;
  Branch branch = Branch::local;

  int64_t channels() const { return data.size(1); }
  Shape3 spatial() const { return {data.size(2), data.size(3), data.size(4)}; }
};

std::string format_shape(const Shape3& s);
/// "64x24x24x24" style, batch dimension dropped.
std::string format_feature_shape(const torch::Tensor& t);

/// Ordered record of named activation shapes collected during a forward pass.
class ShapeTrace {
 public:
  void record(std::string name, const torch::Tensor& t);
  const std::vector<int64_t>* find(const std::string& name) const;
  const std::vector<std::pair<std::string, std::vector<int64_t>>>& entries() const { return entries_; }
  std::string to_text() const;

 private:
  std::vector<std::pair<std::string, std::vector<int64_t>>> entries_;
};

/// 3x3x3 conv (no bias) -> instance norm -> ReLU.
class ConvNormActImpl : public torch::nn::Module {
 public:
  ConvNormActImpl(int64_t in_channels, int64_t out_channels, int64_t stride = 1);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv3d conv{nullptr};
  torch::nn::InstanceNorm3d norm{nullptr};
};
TORCH_MODULE(ConvNormAct);

/// y = shortcut(x) + ReLU(IN(conv(ReLU(IN(conv(x))))))
///
/// The shortcut is the identity when shape is preserved and a strided 1x1x1
/// projection otherwise. With the last norm scale and shift at zero the
/// residual branch vanishes, so a shape-preserving block is the identity.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride = 1,
                    bool zero_init = false);
  torch::Tensor forward(const torch::Tensor& x);
  void zero_last_norm();
  bool has_projection() const { return !shortcut.is_empty(); }

  torch::nn::Conv3d conv1{nullptr}, conv2{nullptr};
  torch::nn::InstanceNorm3d norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv3d shortcut{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Kernel-2 stride-2 transposed convolution.
torch::nn::ConvTranspose3d make_upsample(int64_t in_channels, int64_t out_channels);

}  // namespace yct
