#include "yctnet/global_encoder.hpp"

#include <cmath>

#include "yctnet/error.hpp"

namespace yct {

int projection_steps(int patch_size, int level) {
  int log_p = 0;
  while ((1 << (log_p + 1)) <= patch_size) ++log_p;
  return log_p - level;
}

// ---------------------------------------------------------------------------

PatchEmbeddingImpl::PatchEmbeddingImpl(int64_t in_channels, int64_t patch_size, int64_t embed_dim, Shape3 grid,
                                       bool positional)
    : patch_size_(patch_size), grid_(grid) {
  proj = register_module("proj", torch::nn::Conv3d(torch::nn::Conv3dOptions(in_channels, embed_dim, patch_size)
                                                       .stride(patch_size)));
  if (positional) {
    pos = register_parameter("pos", torch::randn({1, grid[0] * grid[1] * grid[2], embed_dim}) * 0.02);
  }
}

TokenGrid PatchEmbeddingImpl::forward(const torch::Tensor& x) {
  static constexpr const char* kAxes[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a) {
    if (x.size(2 + a) % patch_size_ != 0) {
      throw ShapeError("patch embedding: axis " + std::string(kAxes[a]) + " = " + std::to_string(x.size(2 + a)) +
                       " is not divisible by patch size " + std::to_string(patch_size_));
    }
    if (x.size(2 + a) / patch_size_ != grid_[a]) {
      throw ShapeError("patch embedding: input grid does not match the configured token grid " +
                       format_shape(grid_));
    }
  }
  auto t = proj(x).flatten(2).transpose(1, 2);  // [N, T, K]
  if (pos.defined()) t = t + pos;
  return {t, grid_};
}

// ---------------------------------------------------------------------------

MultiHeadSelfAttentionImpl::MultiHeadSelfAttentionImpl(int64_t embed_dim, int64_t heads)
    : heads_(heads), head_dim_(embed_dim / heads) {
  qkv = register_module("qkv", torch::nn::Linear(embed_dim, 3 * embed_dim));
  out = register_module("out", torch::nn::Linear(embed_dim, embed_dim));
}

torch::Tensor MultiHeadSelfAttentionImpl::forward(const torch::Tensor& x, torch::Tensor* weights) {
  const auto n = x.size(0);
  const auto t = x.size(1);
  auto parts = qkv(x).view({n, t, 3, heads_, head_dim_}).permute({2, 0, 3, 1, 4});
  auto q = parts[0], k = parts[1], v = parts[2];  // [N, heads, T, head_dim]
  torch::Tensor ctx;
  if (weights) {
    auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim_)), -1);
    *weights = attn;
    ctx = torch::matmul(attn, v);
  } else {
    // Fused kernel; never materialises the T x T matrix.
    ctx = at::scaled_dot_product_attention(q, k, v);
  }
  return out(ctx.transpose(1, 2).reshape({n, t, heads_ * head_dim_}));
}

TransformerBlockImpl::TransformerBlockImpl(int64_t embed_dim, int64_t heads, double mlp_ratio) {
  const auto hidden = static_cast<int64_t>(std::lround(embed_dim * mlp_ratio));
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})));
  attn = register_module("attn", MultiHeadSelfAttention(embed_dim, heads));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({embed_dim})));
  fc1 = register_module("fc1", torch::nn::Linear(embed_dim, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, embed_dim));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x) {
  auto h = x + attn(norm1(x));
  return h + fc2(torch::gelu(fc1(norm2(h))));
}

void TransformerBlockImpl::zero_residual_branches() {
  torch::NoGradGuard ng;
  attn->out->weight.zero_();
  attn->out->bias.zero_();
  fc2->weight.zero_();
  fc2->bias.zero_();
}

ViTTrunkImpl::ViTTrunkImpl(int64_t embed_dim, int depth, int64_t heads, double mlp_ratio, std::vector<int> tap_layers)
    : taps_(std::move(tap_layers)) {
  for (int i = 0; i < depth; ++i) blocks->push_back(TransformerBlock(embed_dim, heads, mlp_ratio));
  register_module("blocks", blocks);
}

std::vector<torch::Tensor> ViTTrunkImpl::forward(const torch::Tensor& tokens) {
  std::vector<torch::Tensor> taps;
  auto h = tokens;
  size_t next = 0;
  for (size_t i = 0; i < blocks->size() && next < taps_.size(); ++i) {
    h = blocks[i]->as<TransformerBlockImpl>()->forward(h);
    if (static_cast<int>(i) + 1 == taps_[next]) {
      taps.push_back(h);
      ++next;
    }
  }
  return taps;
}

// ---------------------------------------------------------------------------

SpatialProjectionImpl::SpatialProjectionImpl(int64_t embed_dim, int64_t out_channels, int ups, int downs) {
  int64_t ch = embed_dim;
  for (int i = 0; i < ups; ++i) {
    layers->push_back(make_upsample(ch, out_channels));
    layers->push_back(ConvNormAct(out_channels, out_channels, 1));
    ch = out_channels;
  }
  for (int i = 0; i < downs; ++i) {
    layers->push_back(ConvNormAct(ch, out_channels, 2));
    ch = out_channels;
  }
  if (ups == 0 && downs == 0) layers->push_back(ConvNormAct(ch, out_channels, 1));
  register_module("layers", layers);
}

torch::Tensor SpatialProjectionImpl::forward(const torch::Tensor& tokens, const Shape3& grid) {
  auto x = tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), grid[0], grid[1], grid[2]});
  return layers->forward(x);
}

// ---------------------------------------------------------------------------

ViTGlobalEncoder::ViTGlobalEncoder(const ModelConfig& cfg) : cfg_(cfg) {
  embed = register_module("embed", PatchEmbedding(cfg.in_channels, cfg.patch_size, cfg.embed_dim, cfg.token_grid(),
                                                  cfg.positional_embedding));
  trunk = register_module("trunk", ViTTrunk(cfg.embed_dim, cfg.depth, cfg.heads, cfg.mlp_ratio, cfg.tap_layers));
  for (int level = 1; level <= 4; ++level) {
    const int steps = projection_steps(cfg.patch_size, level);
    projections.push_back(register_module(
        "proj" + std::to_string(level),
        SpatialProjection(cfg.embed_dim, channels(level), std::max(steps, 0), std::max(-steps, 0))));
  }
}

int64_t ViTGlobalEncoder::channels(int level) const { return cfg_.global_channels(level); }

std::vector<FeatureMap> ViTGlobalEncoder::forward(const torch::Tensor& x, ShapeTrace* trace) {
  const auto tg = embed(x);
  if (trace) trace->record("tokens", tg.tokens);
  const auto taps = trunk(tg.tokens);
  std::vector<FeatureMap> out;
  for (int level = 1; level <= 4; ++level) {
    if (trace) trace->record("F_z" + std::to_string(cfg_.tap_layers[level - 1]), taps[level - 1]);
    auto f = projections[level - 1](taps[level - 1], tg.grid);
    if (trace) trace->record("F_G" + std::to_string(level), f);
    out.push_back({f, level, Branch::global});
  }
  return out;
}

}  // namespace yct
