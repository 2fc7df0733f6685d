#include "yctnet/losses.hpp"

#include <cmath>
#include <vector>

#include "yctnet/error.hpp"

namespace yct {

torch::Tensor one_hot(const torch::Tensor& labels, int num_classes, int64_t class_dim) {
  if (num_classes < 2) throw ConfigError("one_hot: num_classes must be >= 2, got " + std::to_string(num_classes));
  auto l = labels.to(torch::kLong);
  if (l.numel() > 0) {
    const auto bad = (l < 0) | (l >= num_classes);
    if (bad.any().item<bool>()) {
      const auto offending = l.masked_select(bad)[0].item<int64_t>();
      throw Error("one_hot: label value " + std::to_string(offending) + " outside [0, " +
                  std::to_string(num_classes - 1) + "]");
    }
  }
  return torch::one_hot(l, num_classes).movedim(-1, class_dim).to(torch::kFloat32).contiguous();
}

namespace {

int64_t class_axis(const torch::Tensor& t) { return t.dim() == 5 ? 1 : 0; }

std::vector<int64_t> reduce_dims(int64_t rank, int64_t class_dim) {
  std::vector<int64_t> dims;
  for (int64_t d = 0; d < rank; ++d)
    if (d != class_dim) dims.push_back(d);
  return dims;
}

void check_pair(const torch::Tensor& a, const torch::Tensor& target, const char* what) {
  if (a.sizes() != target.sizes()) {
    throw ShapeError(std::string(what) + ": prediction and target shapes differ");
  }
  if (a.dim() < 2) throw ShapeError(std::string(what) + ": expected [J, ...] or [N, J, ...]");
}

LossTerms combine(const torch::Tensor& p, const torch::Tensor& log_p, const torch::Tensor& g, int64_t cd) {
  const auto dims = reduce_dims(p.dim(), cd);
  const double num_classes = static_cast<double>(p.size(cd));
  const auto inter = (g * p).sum(dims);
  const auto denom = p.pow(2).sum(dims) + g.pow(2).sum(dims) + kDiceSmooth;
  auto dice = 1.0 - (2.0 / num_classes) * (inter / denom).sum();
  const double voxels = static_cast<double>(p.numel()) / num_classes;
  auto ce = -(g * log_p).sum() / voxels;
  return {dice, ce, dice + ce};
}

}  // namespace

LossTerms dice_ce_loss_terms(const torch::Tensor& probs, const torch::Tensor& target) {
  check_pair(probs, target, "dice_ce_loss");
  const auto cd = class_axis(probs);
  const auto g = target.to(probs.scalar_type());
  const double dev = (probs.sum(cd) - 1.0).abs().max().item<double>();
  if (!(dev <= kSimplexTolerance)) {
    throw Error("dice_ce_loss: probabilities leave the simplex (max |sum - 1| = " + std::to_string(dev) + ")");
  }
  return combine(probs, torch::log(probs.clamp_min(kLogClamp)), g, cd);
}

torch::Tensor dice_ce_loss(const torch::Tensor& probs, const torch::Tensor& target) {
  return dice_ce_loss_terms(probs, target).total;
}

LossTerms dice_ce_loss_from_logits(const torch::Tensor& logits, const torch::Tensor& target) {
  check_pair(logits, target, "dice_ce_loss_from_logits");
  const auto cd = class_axis(logits);
  const auto g = target.to(logits.scalar_type());
  const auto p = torch::softmax(logits, cd);
  const auto log_p = torch::log_softmax(logits, cd).clamp_min(std::log(kLogClamp));
  return combine(p, log_p, g, cd);
}

}  // namespace yct
