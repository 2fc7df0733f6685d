#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "yctnet/config.hpp"
#include "yctnet/metrics.hpp"
#include "yctnet/model.hpp"
#include "yctnet/volume.hpp"

namespace yct {

/// Pins intra-op threads and keeps large activation buffers on the heap
/// between steps (glibc otherwise maps and unmaps them on every pass).
void configure_runtime(int threads);

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/manifest.json + <dir>/tensors/<param.name>.raw

struct CheckpointMeta {
  ModelConfig model;
  TrainConfig train;
  int64_t epoch = 0;
  int64_t step = 0;
  std::string rng_digest;
};

void save_checkpoint(YCTNet& model, const CheckpointMeta& meta, const std::filesystem::path& dir);

struct LoadedCheckpoint {
  YCTNet model{nullptr};
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Training

struct LossPoint {
  int64_t step = 0;
  double loss = 0.0;
};

void write_loss_csv(const std::vector<LossPoint>& curve, const std::filesystem::path& path);

struct TrainResult {
  YCTNet model{nullptr};
  std::vector<LossPoint> curve;
  int64_t steps = 0;
};

/// Per-step observer; `model` holds freshly accumulated gradients.
using StepHook = std::function<void(int64_t step, double loss, YCTNet& model)>;

/// Images are normalised per TrainConfig::normalization, optionally
/// augmented, then optimised with AdamW on the Dice + CE objective at a
/// constant learning rate. Deterministic for a given seed when threads == 1.
/// When `out_dir` is set, writes checkpoint/ (and periodic checkpoint-NNNN/)
/// plus loss.csv there.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::vector<Case>& dataset,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                  const StepHook& hook = {});

/// Batched [N, C, D, H, W] tensors for the given cases, after normalisation.
torch::Tensor stack_images(const std::vector<const Case*>& cases, const Normalization& norm);

// ---------------------------------------------------------------------------
// Sliding-window inference

/// Maps an ROI batch [1, C, roi] to probabilities [1, J, roi].
using Predictor = std::function<torch::Tensor(const torch::Tensor&)>;

struct StitchOptions {
  bool gaussian = false;
  /// Optional window visiting order (indices into the plan); default is plan order.
  std::vector<size_t> order;
  /// Receives the per-voxel window count [D, H, W] when non-null.
  torch::Tensor* coverage = nullptr;
};

/// Stitched probabilities [J, D, H, W] for a [C, D, H, W] image.
torch::Tensor sliding_window_inference(const torch::Tensor& image, const Shape3& roi, double overlap,
                                       const Predictor& predictor, const StitchOptions& opts = {});

MetricsReport evaluate(YCTNet& model, const std::vector<Case>& cases, double overlap,
                       const Normalization& norm, bool gaussian = false);

MetricsReport evaluate_checkpoint(const std::filesystem::path& checkpoint_dir,
                                  const std::vector<Case>& cases, double overlap);

// ---------------------------------------------------------------------------
// Cross-validation

/// fold_of[i] in [0, k): seeded shuffle, then contiguous blocks.
std::vector<int> assign_folds(size_t n, int k, uint64_t seed);

struct CrossValidationResult {
  std::vector<MetricsReport> folds;
  MetricsReport average;  // arithmetic mean of the fold rows

  nlohmann::json to_json() const;
  std::string to_table() const;
};

CrossValidationResult cross_validate(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                     const std::vector<Case>& dataset, int k);

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckEntry {
  std::string parameter;
  int64_t index = 0;
  ParamGroup group = ParamGroup::local;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  bool kink = false;  // one-sided slopes disagree; rel_err is against the closer one
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int checked = 0;
  int failed = 0;
  int kinks = 0;
  double tolerance = 1e-3;
  std::map<ParamGroup, int> per_group;
  std::vector<GradCheckEntry> entries;

  bool passed() const { return checked > 0 && max_rel_err <= tolerance; }
  nlohmann::json to_json() const;
};

/// |a - n| / max(|a|, |n|); both magnitudes below `zero_floor` count as 0.
double relative_error(double analytic, double numeric, double zero_floor = 1e-10);

/// Central-difference check of d(loss)/d(theta) for `n_params` scalar
/// parameters drawn round-robin across the non-empty parameter groups, in
/// double precision. `image` is [C, D, H, W]; `labels` is [D, H, W].
/// Where the central difference straddles a ReLU kink the analytic value is
/// compared with the nearer one-sided slope instead, and the entry is flagged.
GradCheckReport grad_check(const ModelConfig& cfg, const torch::Tensor& image,
                           const torch::Tensor& labels, int n_params, uint64_t seed,
                           double h = 1e-5, double tolerance = 1e-3);

/// Fraction of scalar parameters with nonzero gradient, per group, after one
/// backward pass of the objective. Groups without parameters are absent.
std::map<ParamGroup, double> gradient_flow(YCTNet& model, const torch::Tensor& image,
                                           const torch::Tensor& labels);

// ---------------------------------------------------------------------------
// Ablations

enum class AblationAxis { mixing_method, mixing_position, multi_cfmm, block_counts };

AblationAxis parse_ablation_axis(const std::string& name);
std::string to_string(AblationAxis axis);

struct AblationVariant {
  std::string label;
  std::string detail;
  ModelConfig config;
  double paper_reference = 0.0;
};

/// Row set mirroring the corresponding published ablation table.
std::vector<AblationVariant> ablation_variants(AblationAxis axis, const ModelConfig& base);

struct AblationRow {
  AblationVariant variant;
  double dice = 0.0;
  int64_t parameters = 0;
  double final_loss = 0.0;
};

struct AblationTable {
  AblationAxis axis = AblationAxis::mixing_method;
  std::vector<AblationRow> rows;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Trains and evaluates every variant with the same seed and step budget.
AblationTable ablate(AblationAxis axis, const ModelConfig& base, const TrainConfig& train_cfg,
                     const std::vector<Case>& train_cases, const std::vector<Case>& val_cases,
                     const std::function<void(const AblationRow&)>& on_row = {});

}  // namespace yct
