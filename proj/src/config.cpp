#include "yctnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "yctnet/error.hpp"

using nlohmann::json;

namespace yct {

namespace {

std::string dims(const Shape3& s) {
  return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

bool is_pow2(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

std::string join(const std::vector<int>& v) {
  std::string s = "[";
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(ctx + "." + key + ": unknown key");
  }
}

template <typename T>
T get_as(const json& j, const std::string& key, const std::string& ctx) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(ctx + "." + key + ": wrong type or missing");
  }
}

template <typename T>
void read_opt(const json& j, const std::string& key, const std::string& ctx, T& out) {
  if (j.contains(key)) out = get_as<T>(j, key, ctx);
}

Shape3 read_shape(const json& v, const std::string& field) {
  if (v.is_number_integer()) {
    const auto s = v.get<int64_t>();
    return {s, s, s};
  }
  if (v.is_array() && v.size() == 3 && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); })) {
    return {v[0].get<int64_t>(), v[1].get<int64_t>(), v[2].get<int64_t>()};
  }
  throw ConfigError(field + ": expected an integer or a list of 3 integers");
}

json shape_json(const Shape3& s) {
  if (s[0] == s[1] && s[1] == s[2]) return s[0];
  return json::array({s[0], s[1], s[2]});
}

}  // namespace

// ---------------------------------------------------------------------------

MixMethod parse_mix_method(const std::string& name) {
  if (name == "addition") return MixMethod::addition;
  if (name == "averaging") return MixMethod::averaging;
  if (name == "concatenation") return MixMethod::concatenation;
  if (name == "hadamard") return MixMethod::hadamard;
  if (name == "self_attention") return MixMethod::self_attention;
  throw ConfigError("mixing.method: expected addition|averaging|concatenation|hadamard|self_attention, got '" +
                    name + "'");
}

std::string to_string(MixMethod m) {
  switch (m) {
    case MixMethod::addition: return "addition";
    case MixMethod::averaging: return "averaging";
    case MixMethod::concatenation: return "concatenation";
    case MixMethod::hadamard: return "hadamard";
    case MixMethod::self_attention: return "self_attention";
  }
  return "addition";
}

std::string display_name(MixMethod m) {
  switch (m) {
    case MixMethod::addition: return "Addition";
    case MixMethod::averaging: return "Averaging";
    case MixMethod::concatenation: return "Concatenation";
    case MixMethod::hadamard: return "Hadamard Product";
    case MixMethod::self_attention: return "Self-attention";
  }
  return "Addition";
}

Shape3 ModelConfig::spatial_at(int level) const {
  return {input_size[0] >> level, input_size[1] >> level, input_size[2] >> level};
}

Shape3 ModelConfig::token_grid() const {
  return {input_size[0] / patch_size, input_size[1] / patch_size, input_size[2] / patch_size};
}

std::vector<int> ModelConfig::resolved_decoder_channels() const {
  if (!decoder_channels.empty()) return decoder_channels;
  return {4 * base_channels, 2 * base_channels, base_channels, std::max(1, base_channels / 2)};
}

// ---------------------------------------------------------------------------

void validate(const ModelConfig& c) {
  if (c.block_counts.size() < 2 || c.block_counts.size() > 4) {
    throw ConfigError("block_counts: expected 2 entries (stages 2-3), or up to 4 for deeper ablation variants; got " +
                      std::to_string(c.block_counts.size()));
  }
  for (int b : c.block_counts)
    if (b < 1) throw ConfigError("block_counts: every entry must be >= 1, got " + join(c.block_counts));

  const int deepest = c.deepest_local_stage();
  const int64_t divisor = std::max<int64_t>(16, int64_t{1} << deepest);
  static constexpr const char* kAxes[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a) {
    const auto s = c.input_size[a];
    if (s < divisor || s % divisor != 0) {
      throw ConfigError("input_size: axis " + std::string(kAxes[a]) + " = " + std::to_string(s) +
                        " must be a positive multiple of " + std::to_string(divisor) +
                        " (4-level pyramid and local stage " + std::to_string(deepest) + ")");
    }
  }
  if (c.in_channels < 1) throw ConfigError("in_channels: must be >= 1");

  if (!is_pow2(c.patch_size)) {
    throw ConfigError("patch_size: must be a power of two, got " + std::to_string(c.patch_size));
  }
  for (int a = 0; a < 3; ++a) {
    if (c.input_size[a] % c.patch_size != 0) {
      throw ConfigError("patch_size: " + std::to_string(c.patch_size) + " does not divide input_size axis " +
                        kAxes[a] + " = " + std::to_string(c.input_size[a]));
    }
  }
  if (c.projection == ProjectionMode::strict && c.patch_size != 16) {
    throw ConfigError("patch_size: strict projection requires the token grid at input/16 (patch_size 16), got " +
                      std::to_string(c.patch_size) + "; use \"projection\": \"relaxed\"");
  }
  if (c.embed_dim < 1) throw ConfigError("embed_dim: must be >= 1");
  if (c.heads < 1 || c.embed_dim % c.heads != 0) {
    throw ConfigError("heads: embed_dim " + std::to_string(c.embed_dim) + " must be divisible by heads " +
                      std::to_string(c.heads));
  }
  if (c.depth < 1) throw ConfigError("depth: must be >= 1");
  if (!(c.mlp_ratio > 0.0) || std::lround(c.embed_dim * c.mlp_ratio) < 1) {
    throw ConfigError("mlp_ratio: must give a hidden width >= 1");
  }
  if (c.tap_layers.size() != 4) {
    throw ConfigError("tap_layers: expected 4 layers (one per pyramid level), got " + join(c.tap_layers));
  }
  for (size_t i = 0; i < c.tap_layers.size(); ++i) {
    const int t = c.tap_layers[i];
    if (t < 1 || t > c.depth) {
      throw ConfigError("tap_layers: " + std::to_string(t) + " outside [1, depth=" + std::to_string(c.depth) + "]");
    }
    if (i > 0 && t <= c.tap_layers[i - 1]) throw ConfigError("tap_layers: must be strictly increasing");
  }
  if (c.base_channels < 2) throw ConfigError("base_channels: must be >= 2");
  if (!c.decoder_channels.empty()) {
    if (c.decoder_channels.size() != 4) throw ConfigError("decoder_channels: expected 4 entries");
    for (int ch : c.decoder_channels)
      if (ch < 1) throw ConfigError("decoder_channels: entries must be >= 1");
  }
  if (c.num_classes < 2) throw ConfigError("num_classes: must be >= 2");

  const auto& mix = c.mixing;
  if (mix.pairs.empty()) throw ConfigError("mixing.pairs: at least one (local, global) pair is required");
  std::set<int> targets;
  for (const auto& p : mix.pairs) {
    const std::string tag = "(" + std::to_string(p.local_stage) + "," + std::to_string(p.global_stage) + ")";
    if (p.local_stage < 2 || p.local_stage > deepest) {
      throw ConfigError("mixing.pairs: local stage in " + tag + " must lie in [2, " + std::to_string(deepest) + "]");
    }
    if (p.global_stage < 1 || p.global_stage > 4) {
      throw ConfigError("mixing.pairs: global stage in " + tag + " must lie in [1, 4]");
    }
    if (!targets.insert(p.global_stage).second) {
      throw ConfigError("mixing.pairs: global stage " + std::to_string(p.global_stage) + " is mixed more than once");
    }
    if (mix.align == MixAlign::exact && p.local_stage != p.global_stage) {
      throw ConfigError("mixing.pairs: " + tag + " pairs spatial shapes " +
                        dims(c.spatial_at(p.local_stage)) + " and " + dims(c.spatial_at(p.global_stage)) +
                        "; exact alignment needs equal shapes (set mixing.align to \"resample\")");
    }
    if (mix.method == MixMethod::self_attention) {
      const auto s = c.spatial_at(p.global_stage);
      if (s[0] * s[1] * s[2] > int64_t{32} * 32 * 32) {
        throw ConfigError("mixing.method: self_attention over " + tag + " would attend over " +
                          std::to_string(s[0] * s[1] * s[2]) + " tokens (limit 32^3)");
      }
    }
  }
}

void validate(const TrainConfig& t, const ModelConfig& model) {
  if (t.optimizer != "adamw") throw ConfigError("train.optimizer: only \"adamw\" is supported");
  if (!(t.lr >= 0.0) || !std::isfinite(t.lr)) throw ConfigError("train.lr: must be a finite value >= 0");
  if (!(t.weight_decay >= 0.0)) throw ConfigError("train.weight_decay: must be >= 0");
  if (t.batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (t.epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (t.steps < 0) throw ConfigError("train.steps: must be >= 0");
  if (!(t.overlap >= 0.0 && t.overlap < 1.0)) throw ConfigError("train.overlap: must lie in [0, 1)");
  if (t.folds < 2) throw ConfigError("train.folds: must be >= 2");
  if (t.threads < 1) throw ConfigError("train.threads: must be >= 1");
  if (t.checkpoint_every < 0) throw ConfigError("train.checkpoint_every: must be >= 0");
  for (double p : {t.augment.p_flip, t.augment.p_rotate, t.augment.p_intensity}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("train.augment: probabilities must lie in [0, 1]");
  }
  if (t.roi_shape && *t.roi_shape != model.input_size) {
    throw ConfigError("train.roi_shape: must equal the model input_size " + std::to_string(model.input_size[0]) +
                      "x" + std::to_string(model.input_size[1]) + "x" + std::to_string(model.input_size[2]) +
                      " (positional embeddings fix the token grid)");
  }
  if (t.normalization.mode == NormMode::window && !(t.normalization.hi > t.normalization.lo)) {
    throw ConfigError("train.normalization: window hi must exceed lo");
  }
}

// ---------------------------------------------------------------------------

json to_json(const ModelConfig& c) {
  json pairs = json::array();
  for (const auto& p : c.mixing.pairs) pairs.push_back({p.local_stage, p.global_stage});
  json j = {
      {"name", c.name},
      {"input_size", shape_json(c.input_size)},
      {"in_channels", c.in_channels},
      {"patch_size", c.patch_size},
      {"embed_dim", c.embed_dim},
      {"depth", c.depth},
      {"heads", c.heads},
      {"mlp_ratio", c.mlp_ratio},
      {"tap_layers", c.tap_layers},
      {"projection", c.projection == ProjectionMode::strict ? "strict" : "relaxed"},
      {"positional_embedding", c.positional_embedding},
      {"block_counts", c.block_counts},
      {"base_channels", c.base_channels},
      {"mixing",
       {{"method", to_string(c.mixing.method)},
        {"pairs", pairs},
        {"align", c.mixing.align == MixAlign::exact ? "exact" : "resample"}}},
      {"decoder_channels", c.resolved_decoder_channels()},
      {"num_classes", c.num_classes},
      {"zero_init_residual", c.zero_init_residual},
  };
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  const std::string ctx = "model";
  reject_unknown_keys(j, {"name", "input_size", "in_channels", "patch_size", "embed_dim", "depth", "heads",
                          "mlp_ratio", "tap_layers", "projection", "positional_embedding", "block_counts",
                          "base_channels", "mixing", "decoder_channels", "num_classes", "zero_init_residual"},
                      ctx);
  ModelConfig c;
  read_opt(j, "name", ctx, c.name);
  if (j.contains("input_size")) c.input_size = read_shape(j.at("input_size"), "model.input_size");
  read_opt(j, "in_channels", ctx, c.in_channels);
  read_opt(j, "patch_size", ctx, c.patch_size);
  read_opt(j, "embed_dim", ctx, c.embed_dim);
  read_opt(j, "depth", ctx, c.depth);
  read_opt(j, "heads", ctx, c.heads);
  read_opt(j, "mlp_ratio", ctx, c.mlp_ratio);
  read_opt(j, "tap_layers", ctx, c.tap_layers);
  if (j.contains("projection")) {
    const auto p = get_as<std::string>(j, "projection", ctx);
    if (p == "strict") {
      c.projection = ProjectionMode::strict;
    } else if (p == "relaxed") {
      c.projection = ProjectionMode::relaxed;
    } else {
      throw ConfigError("model.projection: expected strict|relaxed, got '" + p + "'");
    }
  }
  read_opt(j, "positional_embedding", ctx, c.positional_embedding);
  read_opt(j, "block_counts", ctx, c.block_counts);
  read_opt(j, "base_channels", ctx, c.base_channels);
  if (j.contains("mixing")) {
    const auto& m = j.at("mixing");
    reject_unknown_keys(m, {"method", "pairs", "align"}, "model.mixing");
    if (m.contains("method")) c.mixing.method = parse_mix_method(get_as<std::string>(m, "method", "model.mixing"));
    if (m.contains("pairs")) {
      const auto& pairs = m.at("pairs");
      if (!pairs.is_array()) throw ConfigError("model.mixing.pairs: expected a list of [local, global] pairs");
      c.mixing.pairs.clear();
      for (const auto& p : pairs) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
          throw ConfigError("model.mixing.pairs: each entry must be [local_stage, global_stage]");
        }
        c.mixing.pairs.push_back({p[0].get<int>(), p[1].get<int>()});
      }
    }
    if (m.contains("align")) {
      const auto a = get_as<std::string>(m, "align", "model.mixing");
      if (a == "exact") {
        c.mixing.align = MixAlign::exact;
      } else if (a == "resample") {
        c.mixing.align = MixAlign::resample;
      } else {
        throw ConfigError("model.mixing.align: expected exact|resample, got '" + a + "'");
      }
    }
  }
  read_opt(j, "decoder_channels", ctx, c.decoder_channels);
  read_opt(j, "num_classes", ctx, c.num_classes);
  read_opt(j, "zero_init_residual", ctx, c.zero_init_residual);
  return c;
}

json to_json(const TrainConfig& t) {
  json j = {
      {"optimizer", t.optimizer},
      {"lr", t.lr},
      {"weight_decay", t.weight_decay},
      {"batch_size", t.batch_size},
      {"epochs", t.epochs},
      {"steps", t.steps},
      {"seed", t.seed},
      {"overlap", t.overlap},
      {"folds", t.folds},
      {"normalization", {{"mode", to_string(t.normalization.mode)}, {"lo", t.normalization.lo}, {"hi", t.normalization.hi}}},
      {"augmentation", t.augmentation},
      {"augment",
       {{"p_flip", t.augment.p_flip},
        {"p_rotate", t.augment.p_rotate},
        {"p_intensity", t.augment.p_intensity},
        {"max_shift", t.augment.max_shift},
        {"max_scale", t.augment.max_scale}}},
      {"checkpoint_every", t.checkpoint_every},
      {"threads", t.threads},
      {"blend", t.gaussian_blend ? "gaussian" : "uniform"},
  };
  if (t.roi_shape) j["roi_shape"] = json::array({(*t.roi_shape)[0], (*t.roi_shape)[1], (*t.roi_shape)[2]});
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  const std::string ctx = "train";
  reject_unknown_keys(j, {"optimizer", "lr", "weight_decay", "batch_size", "epochs", "steps", "seed", "roi_shape",
                          "overlap", "folds", "normalization", "augmentation", "augment", "checkpoint_every",
                          "threads", "blend"},
                      ctx);
  TrainConfig t;
  read_opt(j, "optimizer", ctx, t.optimizer);
  read_opt(j, "lr", ctx, t.lr);
  read_opt(j, "weight_decay", ctx, t.weight_decay);
  read_opt(j, "batch_size", ctx, t.batch_size);
  read_opt(j, "epochs", ctx, t.epochs);
  read_opt(j, "steps", ctx, t.steps);
  read_opt(j, "seed", ctx, t.seed);
  if (j.contains("roi_shape")) t.roi_shape = read_shape(j.at("roi_shape"), "train.roi_shape");
  read_opt(j, "overlap", ctx, t.overlap);
  read_opt(j, "folds", ctx, t.folds);
  if (j.contains("normalization")) {
    const auto& n = j.at("normalization");
    reject_unknown_keys(n, {"mode", "lo", "hi"}, "train.normalization");
    if (n.contains("mode")) t.normalization.mode = parse_norm_mode(get_as<std::string>(n, "mode", "train.normalization"));
    read_opt(n, "lo", "train.normalization", t.normalization.lo);
    read_opt(n, "hi", "train.normalization", t.normalization.hi);
  }
  read_opt(j, "augmentation", ctx, t.augmentation);
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    const std::string actx = "train.augment";
    reject_unknown_keys(a, {"p_flip", "p_rotate", "p_intensity", "max_shift", "max_scale"}, actx);
    read_opt(a, "p_flip", actx, t.augment.p_flip);
    read_opt(a, "p_rotate", actx, t.augment.p_rotate);
    read_opt(a, "p_intensity", actx, t.augment.p_intensity);
    read_opt(a, "max_shift", actx, t.augment.max_shift);
    read_opt(a, "max_scale", actx, t.augment.max_scale);
  }
  read_opt(j, "checkpoint_every", ctx, t.checkpoint_every);
  read_opt(j, "threads", ctx, t.threads);
  if (j.contains("blend")) {
    const auto b = get_as<std::string>(j, "blend", ctx);
    if (b != "uniform" && b != "gaussian") throw ConfigError("train.blend: expected uniform|gaussian");
    t.gaussian_blend = b == "gaussian";
  }
  return t;
}

ConfigDocument parse_config_document(const json& doc) {
  reject_unknown_keys(doc, {"version", "model", "train"}, "config");
  if (!doc.contains("version")) throw ConfigError("config.version: missing");
  if (!doc.at("version").is_number_integer() || doc.at("version").get<int>() != 1) {
    throw ConfigError("config.version: only version 1 is supported");
  }
  if (!doc.contains("model")) throw ConfigError("config.model: missing");
  ConfigDocument out;
  out.model = model_config_from_json(doc.at("model"));
  if (doc.contains("train")) out.train = train_config_from_json(doc.at("train"));
  validate(out.model);
  validate(out.train, out.model);
  return out;
}

ConfigDocument load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config_document(doc);
}

json to_document(const ConfigDocument& doc) {
  return {{"version", 1}, {"model", to_json(doc.model)}, {"train", to_json(doc.train)}};
}

ModelConfig preset(const std::string& name) {
  ModelConfig c;
  if (name == "paper-96") return c;
  if (name == "desk-64") {
    c.name = "desk-64";
    c.input_size = {64, 64, 64};
    c.patch_size = 4;
    c.embed_dim = 96;
    c.depth = 6;
    c.heads = 3;
    c.tap_layers = {2, 3, 5, 6};
    c.projection = ProjectionMode::relaxed;
    c.block_counts = {2, 4};
    c.base_channels = 16;
    c.num_classes = 4;
    return c;
  }
  throw ConfigError("preset: unknown preset '" + name + "' (expected paper-96 or desk-64)");
}

}  // namespace yct
