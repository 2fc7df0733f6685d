#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "yctnet/cfmm.hpp"
#include "yctnet/config.hpp"
#include "yctnet/decoder.hpp"
#include "yctnet/global_encoder.hpp"
#include "yctnet/layers.hpp"
#include "yctnet/local_encoder.hpp"

namespace yct {

enum class ParamGroup { local, global, cfmm, decoder };

std::string to_string(ParamGroup g);
/// Group of a parameter from its hierarchical name ("local.", "global.", ...).
ParamGroup group_of(const std::string& parameter_name);

struct ForwardOptions {
  ShapeTrace* trace = nullptr;
  /// Replace the decoder skip at this pyramid level (1..3) with zeros. 0 = off.
  int zero_skip_level = 0;
};

/// Y-CT-Net: ResNet-3D local encoder and ViT global encoder, CFMM fusion at
/// the configured stage pairs and a convolutional decoder.
class YCTNetImpl : public torch::nn::Module {
 public:
  explicit YCTNetImpl(ModelConfig cfg);

  /// Logits [N, J, D, H, W] for input [N, C, D, H, W].
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x, const ForwardOptions& opts);
  /// Per-voxel class distribution (softmax of the logits).
  torch::Tensor probabilities(const torch::Tensor& x);

  const ModelConfig& config() const { return cfg_; }

  std::shared_ptr<LocalEncoder> local;
  std::shared_ptr<GlobalEncoder> global;
  CrossFeatureMixer cfmm{nullptr};
  Decoder decoder{nullptr};

 private:
  ModelConfig cfg_;
};
TORCH_MODULE(YCTNet);

/// Validates `cfg` and builds a model with weights drawn from torch's global
/// generator seeded with `seed`.
YCTNet build_model(const ModelConfig& cfg, uint64_t seed);

int64_t count_parameters(const torch::nn::Module& module);
std::map<ParamGroup, int64_t> count_parameters_by_group(const torch::nn::Module& module);

/// Runs a no-grad forward pass at the configured input size (batch 1) and
/// returns every recorded feature shape.
ShapeTrace trace_shapes(const ModelConfig& cfg, uint64_t seed = 0);

struct ShapeLawViolation {
  std::string name;
  std::string expected;
  std::string actual;
};

/// Checks a trace against the pyramid laws implied by `cfg`.
std::vector<ShapeLawViolation> check_shape_laws(const ModelConfig& cfg, const ShapeTrace& trace);

}  // namespace yct
