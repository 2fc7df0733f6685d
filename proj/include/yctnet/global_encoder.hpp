#pragma once

#include <vector>

#include <torch/torch.h>

#include "yctnet/config.hpp"
#include "yctnet/layers.hpp"

namespace yct {

struct TokenGrid {
  torch::Tensor tokens;  // [N, seq_len, K]
  Shape3 grid{};         // (D/P, H/P, W/P)

  int64_t seq_len() const { return grid[0] * grid[1] * grid[2]; }
};

/// Non-overlapping P^3 patches linearly projected to K dims plus a learned
/// positional embedding. The projection is a kernel-P stride-P convolution,
/// which is the same linear map applied to each flattened patch.
class PatchEmbeddingImpl : public torch::nn::Module {
 public:
  PatchEmbeddingImpl(int64_t in_channels, int64_t patch_size, int64_t embed_dim, Shape3 grid,
                     bool positional);
  TokenGrid forward(const torch::Tensor& x);

  torch::nn::Conv3d proj{nullptr};
  torch::Tensor pos;  // [1, seq_len, K]; undefined when disabled

 private:
  int64_t patch_size_;
  Shape3 grid_;
};
TORCH_MODULE(PatchEmbedding);

class MultiHeadSelfAttentionImpl : public torch::nn::Module {
 public:
  MultiHeadSelfAttentionImpl(int64_t embed_dim, int64_t heads);
  /// `weights`, when given, receives the softmaxed attention [N, heads, T, T].
  torch::Tensor forward(const torch::Tensor& x, torch::Tensor* weights = nullptr);

  torch::nn::Linear qkv{nullptr}, out{nullptr};

 private:
  int64_t heads_;
  int64_t head_dim_;
};
TORCH_MODULE(MultiHeadSelfAttention);

/// Pre-norm block: x + MSA(LN(x)), then x + MLP(LN(x)) with a GELU MLP.
class TransformerBlockImpl : public torch::nn::Module {
 public:
  TransformerBlockImpl(int64_t embed_dim, int64_t heads, double mlp_ratio);
  torch::Tensor forward(const torch::Tensor& x);
  /// Zeroes both residual branches' output projections, making the block the identity.
  void zero_residual_branches();

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  MultiHeadSelfAttention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(TransformerBlock);

class ViTTrunkImpl : public torch::nn::Module {
 public:
  ViTTrunkImpl(int64_t embed_dim, int depth, int64_t heads, double mlp_ratio, std::vector<int> tap_layers);
  /// Token tensors after each tap block (1-based), in tap order.
  std::vector<torch::Tensor> forward(const torch::Tensor& tokens);

  torch::nn::ModuleList blocks;

 private:
  std::vector<int> taps_;
};
TORCH_MODULE(ViTTrunk);

/// Tokens [N, T, K] -> [N, K, grid] -> `ups` x (transposed conv x2 + conv/IN/ReLU)
/// or `downs` x strided conv/IN/ReLU, or a single conv/IN/ReLU when the token
/// grid already sits at the target level.
class SpatialProjectionImpl : public torch::nn::Module {
 public:
  SpatialProjectionImpl(int64_t embed_dim, int64_t out_channels, int ups, int downs);
  torch::Tensor forward(const torch::Tensor& tokens, const Shape3& grid);

  torch::nn::Sequential layers;
};
TORCH_MODULE(SpatialProjection);

/// Attention branch. Returns F_G1..F_G4 ordered by level.
class GlobalEncoder : public torch::nn::Module {
 public:
  virtual std::vector<FeatureMap> forward(const torch::Tensor& x, ShapeTrace* trace = nullptr) = 0;
  virtual int64_t channels(int level) const = 0;
};

class ViTGlobalEncoder final : public GlobalEncoder {
 public:
  explicit ViTGlobalEncoder(const ModelConfig& cfg);

  std::vector<FeatureMap> forward(const torch::Tensor& x, ShapeTrace* trace = nullptr) override;
  int64_t channels(int level) const override;

  PatchEmbedding embed{nullptr};
  ViTTrunk trunk{nullptr};
  std::vector<SpatialProjection> projections;

 private:
  ModelConfig cfg_;
};

/// Number of x2 upsamplings (positive) or strided downsamplings (negative)
/// needed to bring a token grid at input/patch to pyramid level `level`.
int projection_steps(int patch_size, int level);

}  // namespace yct
