#include <cmath>
#include <algorithm>
#include <numeric>

#include "yctnet/engine.hpp"
#include "yctnet/error.hpp"

namespace yct {

namespace {

using torch::indexing::Slice;

// Separable Gaussian importance map, sigma = roi / 8 per axis.
torch::Tensor gaussian_weights(const Shape3& roi) {
  std::vector<torch::Tensor> axes;
  for (int a = 0; a < 3; ++a) {
    const double sigma = static_cast<double>(roi[a]) / 8.0;
    const double centre = (static_cast<double>(roi[a]) - 1.0) / 2.0;
    auto t = torch::arange(roi[a], torch::kFloat64);
    axes.push_back(torch::exp(-(t - centre).pow(2) / (2.0 * sigma * sigma)));
  }
  auto w = axes[0].view({-1, 1, 1}) * axes[1].view({1, -1, 1}) * axes[2].view({1, 1, -1});
  return w / w.max();
}

}  // namespace

torch::Tensor sliding_window_inference(const torch::Tensor& image, const Shape3& roi, double overlap,
                                       const Predictor& predictor, const StitchOptions& opts) {
  if (image.dim() != 4) throw ShapeError("sliding_window_inference: image must be [C, D, H, W]");
  const Shape3 shape{image.size(1), image.size(2), image.size(3)};
  const auto plan = plan_windows(shape, roi, overlap);

  std::vector<size_t> order = opts.order;
  if (order.empty()) {
    order.resize(plan.offsets.size());
    std::iota(order.begin(), order.end(), size_t{0});
  } else {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < sorted.size(); ++i) {
      if (sorted.size() != plan.offsets.size() || sorted[i] != i) {
        throw ConfigError("window order must be a permutation of the " + std::to_string(plan.offsets.size()) +
                          " planned windows");
      }
    }
  }

  const auto weight = opts.gaussian ? gaussian_weights(roi) : torch::ones({roi[0], roi[1], roi[2]}, torch::kFloat64);
  torch::Tensor acc;
  auto wsum = torch::zeros({shape[0], shape[1], shape[2]}, torch::kFloat64);
  auto count = torch::zeros({shape[0], shape[1], shape[2]}, torch::kInt32);

  for (size_t idx : order) {
    const auto& o = plan.offsets[idx];
    const auto sd = Slice(o[0], o[0] + roi[0]);
    const auto sh = Slice(o[1], o[1] + roi[1]);
    const auto sw = Slice(o[2], o[2] + roi[2]);
    const auto patch = image.index({Slice(), sd, sh, sw}).unsqueeze(0);
    const auto probs = predictor(patch);
    if (probs.dim() != 5 || probs.size(0) != 1 || probs.size(2) != roi[0] || probs.size(3) != roi[1] ||
        probs.size(4) != roi[2]) {
      throw ShapeError("predictor returned " + format_feature_shape(probs) + " for an ROI of " + format_shape(roi));
    }
    if (!acc.defined()) acc = torch::zeros({probs.size(1), shape[0], shape[1], shape[2]}, torch::kFloat64);
    acc.index({Slice(), sd, sh, sw}) += probs[0].to(torch::kFloat64) * weight;
    wsum.index({sd, sh, sw}) += weight;
    count.index({sd, sh, sw}) += 1;
  }
  if (opts.coverage) *opts.coverage = count;
  return (acc / wsum).to(torch::kFloat32);
}

MetricsReport evaluate(YCTNet& model, const std::vector<Case>& cases, double overlap, const Normalization& norm,
                       bool gaussian) {
  torch::NoGradGuard ng;
  model->eval();
  const auto& cfg = model->config();
  std::vector<MetricsReport> reports;
  StitchOptions opts;
  opts.gaussian = gaussian;
  for (const auto& c : cases) {
    const auto img = normalize_intensity(c.image, norm).volume;
    const auto probs = sliding_window_inference(
        img.data, cfg.input_size, overlap, [&](const torch::Tensor& x) { return model->probabilities(x); }, opts);
    reports.push_back(evaluate_labels(predict_labels(probs), c.label.data[0], cfg.num_classes, c.label.spacing));
  }
  auto out = aggregate_reports(reports);
  out.context.overlap = overlap;
  return out;
}

MetricsReport evaluate_checkpoint(const std::filesystem::path& checkpoint_dir, const std::vector<Case>& cases,
                                  double overlap) {
  auto ck = load_checkpoint(checkpoint_dir);
  auto report = evaluate(ck.model, cases, overlap, ck.meta.train.normalization, ck.meta.train.gaussian_blend);
  report.context.checkpoint = checkpoint_dir.string();
  return report;
}

}  // namespace yct
