#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "yctnet/engine.hpp"
#include "yctnet/error.hpp"

namespace yct {

std::vector<int> assign_folds(size_t n, int k, uint64_t seed) {
  if (k < 2) throw ConfigError("folds: must be at least 2, got " + std::to_string(k));
  if (n < static_cast<size_t>(k)) {
    throw ConfigError("folds: " + std::to_string(k) + " folds need at least as many cases, got " + std::to_string(n));
  }
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), size_t{0});
  std::mt19937_64 rng(seed);
  for (size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  std::vector<int> fold(n);
  for (size_t i = 0; i < n; ++i) fold[perm[i]] = static_cast<int>(i * static_cast<size_t>(k) / n);
  return fold;
}

CrossValidationResult cross_validate(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                     const std::vector<Case>& dataset, int k) {
  const auto fold = assign_folds(dataset.size(), k, train_cfg.seed);
  CrossValidationResult out;
  for (int f = 0; f < k; ++f) {
    std::vector<Case> tr, va;
    for (size_t i = 0; i < dataset.size(); ++i) (fold[i] == f ? va : tr).push_back(dataset[i]);
    auto trained = train(model_cfg, train_cfg, tr);
    auto report = evaluate(trained.model, va, train_cfg.overlap, train_cfg.normalization, train_cfg.gaussian_blend);
    report.context.fold = f;
    report.context.split = "Split-" + std::to_string(f + 1);
    out.folds.push_back(std::move(report));
  }

  // Unweighted mean over folds, so the average row is the mean of the rows shown.
  auto& avg = out.average;
  avg.num_classes = out.folds.front().num_classes;
  avg.context.split = "Avg";
  avg.context.overlap = train_cfg.overlap;
  const double inv = 1.0 / static_cast<double>(k);
  for (const auto& r : out.folds) {
    avg.cases += r.cases;
    for (const auto& [cls, m] : r.per_class) {
      auto& a = avg.per_class[cls];
      a.dice += m.dice * inv;
      a.hd95 += m.hd95 * inv;
      a.precision += m.precision * inv;
      a.sensitivity += m.sensitivity * inv;
      a.hd95_undefined += m.hd95_undefined;
      a.precision_undefined += m.precision_undefined;
      a.sensitivity_undefined += m.sensitivity_undefined;
    }
  }
  recompute_means(avg);
  return out;
}

nlohmann::json CrossValidationResult::to_json() const {
  nlohmann::json folds_json = nlohmann::json::array();
  for (const auto& f : folds) folds_json.push_back(f.to_json());
  return {{"folds", folds_json}, {"average", average.to_json()}};
}

std::string CrossValidationResult::to_table() const {
  std::ostringstream os;
  const auto header = average.to_table();
  os << header.substr(0, header.find('\n') + 1);
  auto row = [&](const MetricsReport& r) {
    const auto t = r.to_table();
    os << t.substr(t.find('\n') + 1);
  };
  for (const auto& f : folds) row(f);
  row(average);
  return os.str();
}

}  // namespace yct
