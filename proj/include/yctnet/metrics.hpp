#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "yctnet/volume.hpp"

namespace yct {

/// 2|A n B| / (|A| + |B|) for voxels equal to `cls`; 1 when both are empty.
double dice_score(const torch::Tensor& pred_labels, const torch::Tensor& gt_labels, int cls);

struct PrecisionSensitivity {
  double precision = 0.0;
  double sensitivity = 0.0;
  bool precision_defined = true;    // false when TP + FP == 0
  bool sensitivity_defined = true;  // false when TP + FN == 0
};

PrecisionSensitivity precision_sensitivity(const torch::Tensor& pred_labels,
                                           const torch::Tensor& gt_labels, int cls);

/// Foreground voxels of a [D, H, W] mask with at least one 6-connected
/// background neighbour; voxels outside the grid count as background.
std::vector<std::array<int64_t, 3>> boundary_voxels(const torch::Tensor& mask);

/// Distance (mm) from every boundary voxel of `from` to the nearest boundary
/// voxel of `to`, via an exact separable Euclidean distance transform.
std::vector<double> directed_surface_distances(const torch::Tensor& from, const torch::Tensor& to,
                                               const Spacing3& spacing);

/// Percentile q in [0, 100] with linear interpolation between order
/// statistics at rank q/100 * (n - 1).
double percentile_linear(std::vector<double> values, double q);

struct Hd95Result {
  double value = 0.0;
  bool defined = true;  // false if either mask is empty; value is then the volume diagonal
};

/// 95th percentile of the symmetric boundary-distance pool.
Hd95Result hd95(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask, const Spacing3& spacing);

struct ClassMetrics {
  double dice = 0.0;
  double hd95 = 0.0;
  double precision = 0.0;
  double sensitivity = 0.0;
  int hd95_undefined = 0;  // cases where the sentinel was used
  int precision_undefined = 0;
  int sensitivity_undefined = 0;
};

struct ReportContext {
  int fold = -1;
  std::string split;
  double overlap = 0.5;
  std::string checkpoint;
};

/// Per-class metrics averaged over cases; means exclude background class 0.
struct MetricsReport {
  int num_classes = 0;
  int cases = 0;
  std::map<int, ClassMetrics> per_class;
  double mean_dice = 0.0;
  double mean_hd95 = 0.0;
  double mean_precision = 0.0;
  double mean_sensitivity = 0.0;
  ReportContext context;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  /// Fixed-width table: one column per foreground class, then mDice and mHD95.
  std::string to_table() const;
};

/// Metrics for one case from [D, H, W] label maps.
MetricsReport evaluate_labels(const torch::Tensor& pred_labels, const torch::Tensor& gt_labels,
                              int num_classes, const Spacing3& spacing);

/// Case-weighted average of per-case reports, then recomputed means.
MetricsReport aggregate_reports(const std::vector<MetricsReport>& reports);

/// Recomputes the four means from per_class (foreground classes only).
void recompute_means(MetricsReport& report);

}  // namespace yct
