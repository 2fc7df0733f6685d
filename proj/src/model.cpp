#include "yctnet/model.hpp"

#include <set>

#include "yctnet/error.hpp"

namespace yct {

std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::local: return "local";
    case ParamGroup::global: return "global";
    case ParamGroup::cfmm: return "cfmm";
    case ParamGroup::decoder: return "decoder";
  }
  return "local";
}

ParamGroup group_of(const std::string& name) {
  if (name.rfind("local.", 0) == 0) return ParamGroup::local;
  if (name.rfind("global.", 0) == 0) return ParamGroup::global;
  if (name.rfind("cfmm.", 0) == 0) return ParamGroup::cfmm;
  if (name.rfind("decoder.", 0) == 0) return ParamGroup::decoder;
  throw Error("parameter '" + name + "' belongs to no component group");
}

YCTNetImpl::YCTNetImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
  auto resnet = std::make_shared<ResNet3dEncoder>(cfg_);
  local = register_module("local", resnet);
  global = register_module("global", std::make_shared<ViTGlobalEncoder>(cfg_));

  std::vector<int64_t> local_ch(cfg_.deepest_local_stage() + 1, 0);
  for (int s : resnet->stages()) local_ch[s] = local->channels(s);
  std::vector<int64_t> global_ch(5, 0);
  for (int l = 1; l <= 4; ++l) global_ch[l] = global->channels(l);
  cfmm = register_module("cfmm", CrossFeatureMixer(cfg_.mixing, local_ch, global_ch));
  decoder = register_module("decoder", Decoder(cfg_));
}

torch::Tensor YCTNetImpl::forward(const torch::Tensor& x) { return forward(x, ForwardOptions{}); }

torch::Tensor YCTNetImpl::forward(const torch::Tensor& x, const ForwardOptions& opts) {
  if (x.dim() != 5) throw ShapeError("model input must be [N, C, D, H, W]");
  if (x.size(1) != cfg_.in_channels) {
    throw ShapeError("model input has " + std::to_string(x.size(1)) + " channels, config expects " +
                     std::to_string(cfg_.in_channels));
  }
  const Shape3 spatial{x.size(2), x.size(3), x.size(4)};
  if (spatial != cfg_.input_size) {
    throw ShapeError("model input spatial shape " + format_shape(spatial) + " differs from configured input_size " +
                     format_shape(cfg_.input_size));
  }
  auto* trace = opts.trace;
  if (trace) trace->record("input", x);

  const auto x_local = prepare_local_input(x);
  if (trace) trace->record("X_L", x_local);
  const auto local_feats = local->forward(x_local, trace);
  const auto global_feats = global->forward(x, trace);
  const auto mixed = cfmm(local_feats, global_feats, trace);

  torch::Tensor level[5];
  for (const auto& g : global_feats) level[g.stage] = g.data;
  for (const auto& m : mixed) level[m.stage] = m.data;
  if (opts.zero_skip_level >= 1 && opts.zero_skip_level <= 3) {
    level[opts.zero_skip_level] = torch::zeros_like(level[opts.zero_skip_level]);
  }
  return decoder->forward({level[4], level[3], level[2], level[1], x}, trace);
}

torch::Tensor YCTNetImpl::probabilities(const torch::Tensor& x) { return torch::softmax(forward(x), 1); }

YCTNet build_model(const ModelConfig& cfg, uint64_t seed) {
  validate(cfg);
  torch::manual_seed(seed);
  return YCTNet(cfg);
}

int64_t count_parameters(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

std::map<ParamGroup, int64_t> count_parameters_by_group(const torch::nn::Module& module) {
  std::map<ParamGroup, int64_t> out;
  for (const auto& item : module.named_parameters()) out[group_of(item.key())] += item.value().numel();
  return out;
}

ShapeTrace trace_shapes(const ModelConfig& cfg, uint64_t seed) {
  auto model = build_model(cfg, seed);
  model->eval();
  torch::NoGradGuard ng;
  ShapeTrace trace;
  auto x = torch::zeros({1, cfg.in_channels, cfg.input_size[0], cfg.input_size[1], cfg.input_size[2]});
  ForwardOptions opts;
  opts.trace = &trace;
  model->forward(x, opts);
  return trace;
}

std::vector<ShapeLawViolation> check_shape_laws(const ModelConfig& cfg, const ShapeTrace& trace) {
  std::vector<ShapeLawViolation> bad;
  auto expect = [&](const std::string& name, int64_t ch, const Shape3& s) {
    const std::vector<int64_t> want{1, ch, s[0], s[1], s[2]};
    const auto* got = trace.find(name);
    auto fmt = [](const std::vector<int64_t>& v) {
      std::string o;
      for (size_t i = 1; i < v.size(); ++i) o += (i > 1 ? "x" : "") + std::to_string(v[i]);
      return o;
    };
    if (!got) {
      bad.push_back({name, fmt(want), "<missing>"});
    } else if (*got != want) {
      bad.push_back({name, fmt(want), fmt(*got)});
    }
  };
  for (int s = 2; s <= cfg.deepest_local_stage(); ++s) expect("F_L" + std::to_string(s), cfg.local_channels(s), cfg.spatial_at(s));
  for (int l = 1; l <= 4; ++l) expect("F_G" + std::to_string(l), cfg.global_channels(l), cfg.spatial_at(l));
  for (const auto& p : cfg.mixing.pairs) {
    expect("F_mix" + std::to_string(p.local_stage) + std::to_string(p.global_stage), cfg.global_channels(p.global_stage),
           cfg.spatial_at(p.global_stage));
  }
  const auto plan = cfg.resolved_decoder_channels();
  for (int k = 0; k < 4; ++k) expect("dec.level" + std::to_string(3 - k), plan[k], cfg.spatial_at(3 - k));
  expect("logits", cfg.num_classes, cfg.input_size);

  const auto grid = cfg.token_grid();
  const auto* tokens = trace.find("tokens");
  const std::vector<int64_t> want_tokens{1, grid[0] * grid[1] * grid[2], cfg.embed_dim};
  if (!tokens || *tokens != want_tokens) {
    bad.push_back({"tokens", std::to_string(want_tokens[1]) + "x" + std::to_string(want_tokens[2]), tokens ? "mismatch" : "<missing>"});
  }
  return bad;
}

}  // namespace yct
