#pragma once

#include <torch/torch.h>

namespace yct {

inline constexpr double kDiceSmooth = 1e-5;    // added to every Dice denominator
inline constexpr double kLogClamp = 1e-8;      // CE uses log(max(p, kLogClamp))
inline constexpr double kSimplexTolerance = 1e-4;

/// One-hot encoding of integer labels; the class axis is inserted at
/// `class_dim`. Throws ConfigError for num_classes < 2 and Error naming the
/// first offending value for labels outside [0, num_classes - 1].
torch::Tensor one_hot(const torch::Tensor& labels, int num_classes, int64_t class_dim = 0);

struct LossTerms {
  torch::Tensor dice;
  torch::Tensor ce;
  torch::Tensor total;
};

/// Joint soft-Dice + cross-entropy objective.
///
///   L_dice = 1 - (2/J) * sum_j (sum_i g_ij p_ij) / (sum_i p_ij^2 + sum_i g_ij^2 + eps)
///   L_ce   = -(1/I) * sum_i sum_j g_ij * log(max(p_ij, delta))
///
/// `probs` and `target` are [J, ...] or [N, J, ...] (rank 5); I counts every
/// voxel of every batch item. Probabilities must lie on the simplex.
LossTerms dice_ce_loss_terms(const torch::Tensor& probs, const torch::Tensor& target);
torch::Tensor dice_ce_loss(const torch::Tensor& probs, const torch::Tensor& target);

/// Same objective from pre-softmax logits; the log term uses log-softmax
/// clamped at log(delta). Used on the training path.
LossTerms dice_ce_loss_from_logits(const torch::Tensor& logits, const torch::Tensor& target);

}  // namespace yct
