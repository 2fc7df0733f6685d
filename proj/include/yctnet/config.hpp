#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "yctnet/volume.hpp"

namespace yct {

enum class MixMethod { addition, averaging, concatenation, hadamard, self_attention };

MixMethod parse_mix_method(const std::string& name);
std::string to_string(MixMethod m);
/// Row label used in ablation tables ("Hadamard Product", ...).
std::string display_name(MixMethod m);

/// How a configured (local, global) pair with different spatial shapes is
/// treated. `exact` rejects it; `resample` trilinearly resizes the local map.
enum class MixAlign { exact, resample };

struct StagePair {
  int local_stage = 2;
  int global_stage = 2;
  bool operator==(const StagePair&) const = default;
};

struct MixSpec {
  MixMethod method = MixMethod::addition;
  std::vector<StagePair> pairs{{2, 2}, {3, 3}};
  MixAlign align = MixAlign::exact;
};

/// How ViT tokens reach the four global pyramid levels. `strict` requires
/// the token grid to sit exactly at input/16 (transposed-conv upsampling
/// only). `relaxed` allows any power-of-two patch size and inserts strided
/// convolutions for levels coarser than the token grid.
enum class ProjectionMode { strict, relaxed };

struct ModelConfig {
  std::string name = "paper-96";
  Shape3 input_size{96, 96, 96};
  int in_channels = 1;

  // global encoder
  int patch_size = 16;
  int embed_dim = 768;
  int depth = 12;
  int heads = 12;
  double mlp_ratio = 4.0;
  std::vector<int> tap_layers{3, 6, 9, 12};
  ProjectionMode projection = ProjectionMode::strict;
  bool positional_embedding = true;

  // local encoder; block_counts[k] is the depth of ResNet stage k + 2
  std::vector<int> block_counts{4, 16};
  int base_channels = 32;

  MixSpec mixing;

  /// Output channels of the four decoder levels; empty means
  /// {4b, 2b, b, b/2} for base_channels b.
  std::vector<int> decoder_channels;
  int num_classes = 9;

  /// Initialise the last norm scale of every residual block to zero.
  bool zero_init_residual = false;

  int local_stage_count() const { return static_cast<int>(block_counts.size()); }
  int deepest_local_stage() const { return 1 + local_stage_count(); }
  int64_t local_channels(int stage) const { return int64_t{base_channels} << (stage - 1); }
  int64_t global_channels(int level) const { return int64_t{base_channels} << (level - 1); }
  Shape3 spatial_at(int level) const;
  Shape3 token_grid() const;
  std::vector<int> resolved_decoder_channels() const;
};

struct TrainConfig {
  std::string optimizer = "adamw";
  double lr = 1e-4;
  double weight_decay = 1e-5;
  int batch_size = 1;
  int epochs = 1;
  int64_t steps = 0;  // > 0 overrides epochs
  uint64_t seed = 0;
  std::optional<Shape3> roi_shape;  // defaults to the model input size
  double overlap = 0.5;
  int folds = 5;
  Normalization normalization{};
  AugmentConfig augment{};
  bool augmentation = true;
  int64_t checkpoint_every = 0;  // 0: final checkpoint only
  int threads = 1;
  bool gaussian_blend = false;
};

struct ConfigDocument {
  ModelConfig model;
  TrainConfig train;
};

/// Throws ConfigError naming the violated field and constraint.
void validate(const ModelConfig& cfg);
void validate(const TrainConfig& cfg, const ModelConfig& model);

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
/// Strict parsers: unknown keys and wrong types are ConfigErrors.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// {"version": 1, "model": {...}, "train": {...}}; "train" is optional.
ConfigDocument parse_config_document(const nlohmann::json& doc);
ConfigDocument load_config(const std::filesystem::path& path);
nlohmann::json to_document(const ConfigDocument& doc);

/// Built-in presets: "paper-96" and "desk-64".
ModelConfig preset(const std::string& name);

}  // namespace yct
