#include "yctnet/cfmm.hpp"

#include <cmath>

#include "yctnet/error.hpp"

namespace yct {

namespace {

const FeatureMap* find_stage(const std::vector<FeatureMap>& maps, int stage) {
  for (const auto& m : maps)
    if (m.stage == stage) return &m;
  return nullptr;
}

std::string pair_tag(const StagePair& p) {
  return "(F_L" + std::to_string(p.local_stage) + ", F_G" + std::to_string(p.global_stage) + ")";
}

torch::nn::Conv3d pointwise(int64_t in, int64_t out) {
  return torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 1));
}

}  // namespace

std::vector<StagePair> select_pairs(const std::vector<FeatureMap>& local, const std::vector<FeatureMap>& global,
                                    const MixSpec& spec) {
  if (local.empty() || global.empty()) throw ConfigError("select_pairs: both feature sets must be nonempty");
  std::vector<StagePair> out;
  for (const auto& p : spec.pairs) {
    const auto* fl = find_stage(local, p.local_stage);
    const auto* fg = find_stage(global, p.global_stage);
    if (!fl) throw ConfigError("mixing pair " + pair_tag(p) + ": local stage is not produced by the encoder");
    if (!fg) throw ConfigError("mixing pair " + pair_tag(p) + ": global stage is not produced by the encoder");
    if (spec.align == MixAlign::exact && fl->spatial() != fg->spatial()) {
      throw ConfigError("mixing pair " + pair_tag(p) + ": spatial shapes " + format_shape(fl->spatial()) + " and " +
                        format_shape(fg->spatial()) + " differ");
    }
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------

PairMixerImpl::PairMixerImpl(MixMethod method, int64_t local_channels, int64_t global_channels, MixAlign align)
    : method_(method), align_(align), channels_(global_channels) {
  if (local_channels != global_channels) {
    projection = register_module("projection", pointwise(local_channels, global_channels));
  }
  switch (method) {
    case MixMethod::concatenation:
      fuse = register_module("fuse", pointwise(2 * global_channels, global_channels));
      break;
    case MixMethod::self_attention:
      query = register_module("query", pointwise(global_channels, global_channels));
      key = register_module("key", pointwise(global_channels, global_channels));
      value = register_module("value", pointwise(global_channels, global_channels));
      out = register_module("out", pointwise(global_channels, global_channels));
      break;
    default:
      break;
  }
}

torch::Tensor PairMixerImpl::cross_attend(const torch::Tensor& fl, const torch::Tensor& fg) {
  const auto c = fg.size(1);
  const auto tokens = fg.size(2) * fg.size(3) * fg.size(4);
  if (tokens > kMaxMixTokens) {
    throw ShapeError("self-attention mixing: " + std::to_string(tokens) + " tokens exceeds the 32^3 limit");
  }
  auto q = query(fl).flatten(2).transpose(1, 2);  // [N, T, C]
  auto k = key(fg).flatten(2);                    // [N, C, T]
  auto v = value(fg).flatten(2).transpose(1, 2);  // [N, T, C]
  auto attn = torch::softmax(torch::bmm(q, k) / std::sqrt(static_cast<double>(c)), -1);
  auto ctx = torch::bmm(attn, v).transpose(1, 2).reshape(fg.sizes());
  return fg + out(ctx);
}

torch::Tensor PairMixerImpl::forward(const torch::Tensor& fl_in, const torch::Tensor& fg) {
  auto fl = fl_in;
  if (fl.sizes().slice(2) != fg.sizes().slice(2)) {
    if (align_ == MixAlign::exact) {
      throw ShapeError("mix: local " + format_feature_shape(fl) + " and global " + format_feature_shape(fg) +
                       " spatial shapes differ");
    }
    fl = torch::nn::functional::interpolate(
        fl, torch::nn::functional::InterpolateFuncOptions()
                .size(std::vector<int64_t>{fg.size(2), fg.size(3), fg.size(4)})
                .mode(torch::kTrilinear)
                .align_corners(false));
  }
  if (!projection.is_empty()) fl = projection(fl);
  if (fl.size(1) != fg.size(1)) {
    throw ShapeError("mix: channel count " + std::to_string(fl.size(1)) + " does not match global " +
                     std::to_string(fg.size(1)) + " and no projection was built");
  }
  switch (method_) {
    case MixMethod::addition:
      return fl + fg;
    case MixMethod::averaging:
      return (fl + fg) * 0.5;
    case MixMethod::hadamard:
      return fl * fg;
    case MixMethod::concatenation:
      return fuse(torch::cat({fl, fg}, 1));
    case MixMethod::self_attention:
      return cross_attend(fl, fg);
  }
  return fl + fg;
}

// ---------------------------------------------------------------------------

CrossFeatureMixerImpl::CrossFeatureMixerImpl(const MixSpec& spec, const std::vector<int64_t>& local_channels_by_stage,
                                             const std::vector<int64_t>& global_channels_by_level)
    : spec_(spec) {
  for (const auto& p : spec.pairs) {
    mixers->push_back(PairMixer(spec.method, local_channels_by_stage.at(p.local_stage),
                                global_channels_by_level.at(p.global_stage), spec.align));
  }
  register_module("mixers", mixers);
}

std::vector<FeatureMap> CrossFeatureMixerImpl::forward(const std::vector<FeatureMap>& local,
                                                       const std::vector<FeatureMap>& global, ShapeTrace* trace) {
  const auto pairs = select_pairs(local, global, spec_);
  std::vector<FeatureMap> out;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& fl = *find_stage(local, pairs[i].local_stage);
    const auto& fg = *find_stage(global, pairs[i].global_stage);
    auto mixed = mixers[i]->as<PairMixerImpl>()->forward(fl.data, fg.data);
    if (trace) {
      trace->record("F_mix" + std::to_string(pairs[i].local_stage) + std::to_string(pairs[i].global_stage), mixed);
    }
    out.push_back({mixed, pairs[i].global_stage, Branch::mixed});
  }
  return out;
}

}  // namespace yct
