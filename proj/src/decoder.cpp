#include "yctnet/decoder.hpp"

#include "yctnet/error.hpp"

namespace yct {

DecoderImpl::DecoderImpl(const ModelConfig& cfg) {
  const auto plan = cfg.resolved_decoder_channels();
  const int64_t c4 = cfg.global_channels(4);
  // Skip channel counts at levels 3, 2, 1; mixed maps keep the global width.
  const int64_t skip_ch[3] = {cfg.global_channels(3), cfg.global_channels(2), cfg.global_channels(1)};

  bottleneck = register_module("bottleneck", ResidualBlock(c4, c4, 1, cfg.zero_init_residual));
  int64_t prev = c4;
  for (int k = 0; k < 4; ++k) {
    const int64_t skip = k < 3 ? skip_ch[k] : plan[3];
    ups.push_back(register_module("up" + std::to_string(k + 1), make_upsample(prev, plan[k])));
    blocks.push_back(register_module("block" + std::to_string(k + 1),
                                     ResidualBlock(plan[k] + skip, plan[k], 1, cfg.zero_init_residual)));
    prev = plan[k];
  }
  input_residual = register_module("input_residual", ConvNormAct(cfg.in_channels, plan[3], 1));
  head = register_module("head", torch::nn::Conv3d(torch::nn::Conv3dOptions(plan[3], cfg.num_classes, 1)));
}

namespace {

void check_skip(const torch::Tensor& up, const torch::Tensor& skip, const std::string& level) {
  if (skip.dim() != 5 || up.sizes().slice(2) != skip.sizes().slice(2) || up.size(0) != skip.size(0)) {
    throw ShapeError("decoder " + level + ": skip " + format_feature_shape(skip) +
                     " is off-pyramid for upsampled features " + format_feature_shape(up));
  }
}

}  // namespace

torch::Tensor DecoderImpl::forward(const DecoderInputs& in, ShapeTrace* trace) {
  const torch::Tensor* skips[4] = {&in.skip3, &in.skip2, &in.skip1, nullptr};
  static constexpr const char* kLevels[4] = {"level 3", "level 2", "level 1", "level 0 (input)"};

  auto h = bottleneck(in.bottleneck);
  if (trace) trace->record("dec.bottleneck", h);
  for (int k = 0; k < 4; ++k) {
    auto up = ups[k](h);
    torch::Tensor skip;
    if (k < 3) {
      skip = *skips[k];
    } else {
      skip = input_residual(in.input);
      if (trace) trace->record("dec.input_residual", skip);
    }
    check_skip(up, skip, kLevels[k]);
    h = blocks[k](torch::cat({up, skip}, 1));
    if (trace) trace->record("dec.level" + std::to_string(3 - k), h);
  }
  auto logits = head(h);
  if (trace) trace->record("logits", logits);
  return logits;
}

void DecoderImpl::zero_init_residuals() {
  bottleneck->zero_last_norm();
  for (auto& b : blocks) b->zero_last_norm();
}

torch::Tensor predict_labels(const torch::Tensor& probabilities) {
  const int64_t class_dim = probabilities.dim() == 5 ? 1 : 0;
  // argmax returns the first maximal index, i.e. the lowest class on ties.
  return probabilities.argmax(class_dim).to(torch::kInt32);
}

}  // namespace yct
