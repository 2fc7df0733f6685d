#pragma once

#include <vector>

#include <torch/torch.h>

#include "yctnet/config.hpp"
#include "yctnet/layers.hpp"

namespace yct {

/// Largest token count (32^3) the self-attention mixer accepts per pair.
inline constexpr int64_t kMaxMixTokens = 32 * 32 * 32;

/// Configured pairs, in MixSpec order, after checking that both stages exist
/// and (for exact alignment) that their spatial shapes agree.
std::vector<StagePair> select_pairs(const std::vector<FeatureMap>& local,
                                    const std::vector<FeatureMap>& global, const MixSpec& spec);

/// Mixes one local map into one global map. When channel counts differ the
/// local map first passes through a learned 1x1x1 projection to the global
/// channel count. The output always has the global map's shape.
class PairMixerImpl : public torch::nn::Module {
 public:
  PairMixerImpl(MixMethod method, int64_t local_channels, int64_t global_channels,
                MixAlign align = MixAlign::exact);
  torch::Tensor forward(const torch::Tensor& fl, const torch::Tensor& fg);

  MixMethod method() const { return method_; }
  bool has_projection() const { return !projection.is_empty(); }

  torch::nn::Conv3d projection{nullptr};
  torch::nn::Conv3d fuse{nullptr};  // concatenation: 2C -> C
  torch::nn::Conv3d query{nullptr}, key{nullptr}, value{nullptr}, out{nullptr};  // self_attention

 private:
  torch::Tensor cross_attend(const torch::Tensor& fl, const torch::Tensor& fg);

  MixMethod method_;
  MixAlign align_;
  int64_t channels_;
};
TORCH_MODULE(PairMixer);

/// Cross Feature Mixer Module: one PairMixer per configured pair.
class CrossFeatureMixerImpl : public torch::nn::Module {
 public:
  CrossFeatureMixerImpl(const MixSpec& spec, const std::vector<int64_t>& local_channels_by_stage,
                        const std::vector<int64_t>& global_channels_by_level);
  /// One mixed FeatureMap per pair, tagged with the global stage it replaces.
  std::vector<FeatureMap> forward(const std::vector<FeatureMap>& local,
                                  const std::vector<FeatureMap>& global, ShapeTrace* trace = nullptr);

  const MixSpec& spec() const { return spec_; }
  torch::nn::ModuleList mixers;

 private:
  MixSpec spec_;
};
TORCH_MODULE(CrossFeatureMixer);

}  // namespace yct
