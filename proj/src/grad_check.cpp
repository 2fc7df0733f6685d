#include <algorithm>
#include <cmath>
#include <random>

#include "yctnet/engine.hpp"
#include "yctnet/error.hpp"
#include "yctnet/losses.hpp"

namespace yct {

double relative_error(double analytic, double numeric, double zero_floor) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < zero_floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

namespace {

constexpr ParamGroup kGroups[] = {ParamGroup::local, ParamGroup::global, ParamGroup::cfmm, ParamGroup::decoder};

torch::Tensor objective(YCTNet& model, const torch::Tensor& x, const torch::Tensor& y) {
  return dice_ce_loss_from_logits(model->forward(x), y).total;
}

}  // namespace

GradCheckReport grad_check(const ModelConfig& cfg, const torch::Tensor& image, const torch::Tensor& labels,
                           int n_params, uint64_t seed, double h, double tolerance) {
  if (n_params < 1) throw ConfigError("grad check: number of parameters must be >= 1");
  auto model = build_model(cfg, seed);
  model->to(torch::kFloat64);
  const auto x = image.to(torch::kFloat64).unsqueeze(0);
  const auto y = one_hot(labels, cfg.num_classes, 0).to(torch::kFloat64).unsqueeze(0);

  model->zero_grad();
  objective(model, x, y).backward();

  std::map<ParamGroup, std::vector<std::pair<std::string, torch::Tensor>>> by_group;
  for (const auto& item : model->named_parameters()) by_group[group_of(item.key())].emplace_back(item.key(), item.value());

  std::vector<ParamGroup> groups;
  for (auto g : kGroups)
    if (!by_group[g].empty()) groups.push_back(g);

  GradCheckReport report;
  report.tolerance = tolerance;
  std::mt19937_64 rng(seed);
  torch::NoGradGuard ng;
  for (int i = 0; i < n_params; ++i) {
    const auto g = groups[static_cast<size_t>(i) % groups.size()];
    const auto& params = by_group[g];
    // Uniform over the scalars of the group.
    int64_t total = 0;
    for (const auto& p : params) total += p.second.numel();
    int64_t pick = static_cast<int64_t>(rng() % static_cast<uint64_t>(total));
    size_t which = 0;
    while (pick >= params[which].second.numel()) pick -= params[which++].second.numel();
    const auto& [name, tensor] = params[which];

    double* value = tensor.data_ptr<double>() + pick;
    const double analytic = tensor.grad().contiguous().data_ptr<double>()[pick];
    const double saved = *value;
    *value = saved + h;
    const double plus = objective(model, x, y).item<double>();
    *value = saved - h;
    const double minus = objective(model, x, y).item<double>();
    *value = saved;
    const double numeric = (plus - minus) / (2.0 * h);

    GradCheckEntry e{name, pick, g, analytic, numeric, relative_error(analytic, numeric)};
    if (e.rel_err > tolerance) {
      // A ReLU that changes sign inside [-h, h] bends the objective; the
      // central difference then averages two slopes. Autograd has to agree
      // with one side.
      const double f0 = objective(model, x, y).item<double>();
      const double right = (plus - f0) / h, left = (f0 - minus) / h;
      if (relative_error(left, right) > tolerance) {
        e.kink = true;
        e.rel_err = std::min(relative_error(analytic, left), relative_error(analytic, right));
        ++report.kinks;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, e.rel_err);
    if (e.rel_err > tolerance) ++report.failed;
    ++report.checked;
    ++report.per_group[g];
    report.entries.push_back(std::move(e));
  }
  return report;
}

nlohmann::json GradCheckReport::to_json() const {
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [g, n] : per_group) groups[to_string(g)] = n;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : entries) {
    rows.push_back({{"parameter", e.parameter},
                    {"index", e.index},
                    {"group", to_string(e.group)},
                    {"analytic", e.analytic},
                    {"numeric", e.numeric},
                    {"rel_err", e.rel_err},
                    {"kink", e.kink}});
  }
  return {{"max_rel_err", max_rel_err}, {"checked", checked},  {"failed", failed},
          {"kinks", kinks},             {"tolerance", tolerance}, {"passed", passed()},
          {"per_group", groups},        {"entries", rows}};
}

std::map<ParamGroup, double> gradient_flow(YCTNet& model, const torch::Tensor& image, const torch::Tensor& labels) {
  const auto& cfg = model->config();
  const auto dtype = model->parameters().front().scalar_type();
  const auto x = image.to(dtype).unsqueeze(0);
  const auto y = one_hot(labels, cfg.num_classes, 0).to(dtype).unsqueeze(0);
  model->zero_grad();
  objective(model, x, y).backward();

  std::map<ParamGroup, std::pair<int64_t, int64_t>> counts;
  for (const auto& item : model->named_parameters()) {
    auto& c = counts[group_of(item.key())];
    c.second += item.value().numel();
    const auto& grad = item.value().grad();
    if (grad.defined()) c.first += grad.ne(0).sum().item<int64_t>();
  }
  std::map<ParamGroup, double> out;
  for (const auto& [g, c] : counts)
    if (c.second > 0) out[g] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

}  // namespace yct
