#include "yctnet/local_encoder.hpp"

#include "yctnet/error.hpp"

namespace yct {

torch::Tensor prepare_local_input(const torch::Tensor& x) {
  if (x.dim() != 5) throw ShapeError("prepare_local_input: expected [N, C, D, H, W]");
  return x.repeat({1, 3, 1, 1, 1});
}

ResNet3dEncoder::ResNet3dEncoder(const ModelConfig& cfg) : base_channels_(cfg.base_channels) {
  const int64_t b = cfg.base_channels;
  stem1 = register_module("stem1", ConvNormAct(3 * cfg.in_channels, b, 2));
  stem2 = register_module("stem2", ConvNormAct(b, b, 2));

  int64_t in_ch = b;
  for (size_t k = 0; k < cfg.block_counts.size(); ++k) {
    const int stage = first_stage_ + static_cast<int>(k);
    const int64_t out_ch = channels(stage);
    // The stem already brings the grid to input/4, so stage 2 keeps its resolution.
    const int64_t stride = stage == first_stage_ ? 1 : 2;
    torch::nn::Sequential seq;
    for (int i = 0; i < cfg.block_counts[k]; ++i) {
      seq->push_back(ResidualBlock(i == 0 ? in_ch : out_ch, out_ch, i == 0 ? stride : 1, cfg.zero_init_residual));
    }
    stage_blocks.push_back(register_module("stage" + std::to_string(stage), seq));
    in_ch = out_ch;
  }
}

std::vector<int> ResNet3dEncoder::stages() const {
  std::vector<int> s;
  for (size_t k = 0; k < stage_blocks.size(); ++k) s.push_back(first_stage_ + static_cast<int>(k));
  return s;
}

int64_t ResNet3dEncoder::channels(int stage) const { return int64_t{base_channels_} << (stage - 1); }

std::vector<FeatureMap> ResNet3dEncoder::forward(const torch::Tensor& x_local, ShapeTrace* trace) {
  static constexpr const char* kAxes[3] = {"D", "H", "W"};
  const int64_t divisor = int64_t{1} << (first_stage_ + static_cast<int>(stage_blocks.size()) - 1);
  for (int a = 0; a < 3; ++a) {
    if (x_local.size(2 + a) % divisor != 0) {
      throw ShapeError("local encoder: axis " + std::string(kAxes[a]) + " = " + std::to_string(x_local.size(2 + a)) +
                       " is not divisible by " + std::to_string(divisor));
    }
  }
  auto h = stem2(stem1(x_local));
  if (trace) trace->record("local.stem", h);
  std::vector<FeatureMap> out;
  for (size_t k = 0; k < stage_blocks.size(); ++k) {
    h = stage_blocks[k]->forward(h);
    const int stage = first_stage_ + static_cast<int>(k);
    if (trace) trace->record("F_L" + std::to_string(stage), h);
    out.push_back({h, stage, Branch::local});
  }
  return out;
}

void ResNet3dEncoder::zero_init_residuals() {
  for (auto& seq : stage_blocks)
    for (auto& m : *seq) m.get<ResidualBlock>()->zero_last_norm();
}

}  // namespace yct
