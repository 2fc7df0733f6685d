#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace yct {

using Shape3 = std::array<int64_t, 3>;
using Spacing3 = std::array<double, 3>;

enum class VolumeKind { image, label };

/// Dense [C, D, H, W] field with physical voxel spacing along (D, H, W).
/// Images are float32, labels int32.
struct Volume {
  torch::Tensor data;
  Spacing3 spacing{1.0, 1.0, 1.0};
  VolumeKind kind = VolumeKind::image;

  static Volume image(torch::Tensor data, Spacing3 spacing = {1.0, 1.0, 1.0});
  static Volume label(torch::Tensor data, Spacing3 spacing = {1.0, 1.0, 1.0});

  int64_t channels() const { return data.size(0); }
  Shape3 spatial() const { return {data.size(1), data.size(2), data.size(3)}; }

  /// Throws ShapeError / Error on rank, spacing or dtype violations.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Synthetic phantoms

struct PhantomSpec {
  int64_t grid_size = 32;
  int num_classes = 4;
  int shapes_per_class = 1;
  double noise_sigma = 0.1;
  uint64_t seed = 0;
};

/// Axis-aligned ellipsoids and boxes, one label per class, placed without
/// overlap. Pure function of `spec`: equal specs give bit-identical volumes.
std::pair<Volume, Volume> generate_phantom(const PhantomSpec& spec);

// ---------------------------------------------------------------------------
// Intensity normalisation

enum class NormMode { zscore, minmax, window };

struct Normalization {
  NormMode mode = NormMode::zscore;
  double lo = 0.0;  // window only
  double hi = 1.0;  // window only
};

struct NormalizeResult {
  Volume volume;
  bool degenerate = false;  // constant input; output is all zeros
};

NormalizeResult normalize_intensity(const Volume& v, const Normalization& norm);

NormMode parse_norm_mode(const std::string& name);
std::string to_string(NormMode mode);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentConfig {
  double p_flip = 0.5;       // per spatial axis
  double p_rotate = 0.5;     // one 90-degree-multiple rotation in a random plane
  double p_intensity = 0.5;  // image-only scale and shift
  double max_shift = 0.1;
  double max_scale = 0.1;    // scale drawn from [1 - max_scale, 1 + max_scale]
};

/// Spatial axis index 0..2 maps to (D, H, W).
Volume flip(const Volume& v, int axis);
/// Rotates by k * 90 degrees in the plane spanned by two spatial axes.
Volume rot90(const Volume& v, int k, int axis_a, int axis_b);

/// Applies one random geometric transform to both volumes and an intensity
/// jitter to the image. All randomness comes from `rng`.
std::pair<Volume, Volume> augment(const Volume& image, const Volume& label,
                                  const AugmentConfig& cfg, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Sliding-window geometry

struct WindowPlan {
  Shape3 volume_shape{};
  Shape3 roi_shape{};
  double overlap = 0.0;
  std::vector<Shape3> offsets;  // lexicographic order
};

/// Per-axis stride floor(roi * (1 - overlap)); the last window on each axis
/// is clamped to the volume edge.
WindowPlan plan_windows(const Shape3& volume_shape, const Shape3& roi_shape, double overlap);

/// Offsets along one axis, as used by plan_windows.
std::vector<int64_t> axis_offsets(int64_t extent, int64_t roi, double overlap);

// ---------------------------------------------------------------------------
// On-disk format: <stem>.json header + <stem>.raw little-endian payload.

void write_volume(const Volume& v, const std::filesystem::path& stem);
Volume read_volume(const std::filesystem::path& stem);

struct Case {
  std::string name;
  Volume image;
  Volume label;
};

struct DatasetManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  int num_classes = 0;
  int64_t grid_size = 0;
};

/// Writes images/NNN, labels/NNN and manifest.json. The first
/// round(train_fraction * count) cases form the training split.
DatasetManifest write_phantom_dataset(const std::filesystem::path& dir, int count,
                                      const PhantomSpec& base, double train_fraction = 0.8);

DatasetManifest read_manifest(const std::filesystem::path& dir);

/// split: "train", "val" or "all".
std::vector<Case> load_cases(const std::filesystem::path& dir, const std::string& split);

/// Seed used for the i-th phantom of a dataset generated from `base_seed`.
uint64_t phantom_case_seed(uint64_t base_seed, int index);

}  // namespace yct
