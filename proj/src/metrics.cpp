#include "yctnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "yctnet/error.hpp"

namespace yct {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

torch::Tensor as_mask(const torch::Tensor& t) {
  if (t.dim() != 3) throw ShapeError("mask must be a [D, H, W] tensor");
  return (t != 0).to(torch::kUInt8).contiguous();
}

int64_t count(const torch::Tensor& b) { return b.sum().item<int64_t>(); }

// Lower envelope of parabolas w*(q - p)^2 + f(p) over the finite sites of f.
void edt_1d(const double* f, double* out, int64_t n, double w, std::vector<int64_t>& v, std::vector<double>& z) {
  v.assign(static_cast<size_t>(n), 0);
  z.assign(static_cast<size_t>(n) + 1, 0.0);
  int64_t k = -1;
  for (int64_t q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    while (true) {
      if (k < 0) {
        v[0] = q;
        z[0] = -kInf;
        z[1] = kInf;
        k = 0;
        break;
      }
      const int64_t p = v[static_cast<size_t>(k)];
      const double s = ((f[q] + w * static_cast<double>(q * q)) - (f[p] + w * static_cast<double>(p * p))) /
                       (2.0 * w * static_cast<double>(q - p));
      if (s <= z[static_cast<size_t>(k)]) {
        --k;
        continue;
      }
      ++k;
      v[static_cast<size_t>(k)] = q;
      z[static_cast<size_t>(k)] = s;
      z[static_cast<size_t>(k) + 1] = kInf;
      break;
    }
  }
  if (k < 0) {
    std::fill(out, out + n, kInf);
    return;
  }
  int64_t j = 0;
  for (int64_t q = 0; q < n; ++q) {
    while (z[static_cast<size_t>(j) + 1] < static_cast<double>(q)) ++j;
    const int64_t p = v[static_cast<size_t>(j)];
    const double d = static_cast<double>(q - p);
    out[q] = w * d * d + f[p];
  }
}

// Squared Euclidean distance (mm^2) from each voxel to the nearest site.
std::vector<double> squared_edt(const std::vector<uint8_t>& sites, const Shape3& shape, const Spacing3& spacing) {
  const int64_t n = shape[0] * shape[1] * shape[2];
  std::vector<double> g(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) g[static_cast<size_t>(i)] = sites[static_cast<size_t>(i)] ? 0.0 : kInf;

  const int64_t strides[3] = {shape[1] * shape[2], shape[2], 1};
  std::vector<double> line_in, line_out;
  std::vector<int64_t> v;
  std::vector<double> z;
  for (int axis = 0; axis < 3; ++axis) {
    const int64_t len = shape[axis];
    const double w = spacing[axis] * spacing[axis];
    line_in.resize(static_cast<size_t>(len));
    line_out.resize(static_cast<size_t>(len));
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (int64_t i1 = 0; i1 < shape[a1]; ++i1) {
      for (int64_t i2 = 0; i2 < shape[a2]; ++i2) {
        const int64_t base = i1 * strides[a1] + i2 * strides[a2];
        for (int64_t t = 0; t < len; ++t) line_in[static_cast<size_t>(t)] = g[static_cast<size_t>(base + t * strides[axis])];
        edt_1d(line_in.data(), line_out.data(), len, w, v, z);
        for (int64_t t = 0; t < len; ++t) g[static_cast<size_t>(base + t * strides[axis])] = line_out[static_cast<size_t>(t)];
      }
    }
  }
  return g;
}

std::vector<uint8_t> boundary_flags(const torch::Tensor& mask) {
  const auto m = as_mask(mask);
  const int64_t D = m.size(0), H = m.size(1), W = m.size(2);
  const auto* p = m.data_ptr<uint8_t>();
  std::vector<uint8_t> out(static_cast<size_t>(D * H * W), 0);
  auto at = [&](int64_t d, int64_t h, int64_t w) -> uint8_t {
    if (d < 0 || h < 0 || w < 0 || d >= D || h >= H || w >= W) return 0;
    return p[(d * H + h) * W + w];
  };
  for (int64_t d = 0; d < D; ++d)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) {
        if (!at(d, h, w)) continue;
        if (!at(d - 1, h, w) || !at(d + 1, h, w) || !at(d, h - 1, w) || !at(d, h + 1, w) || !at(d, h, w - 1) ||
            !at(d, h, w + 1)) {
          out[static_cast<size_t>((d * H + h) * W + w)] = 1;
        }
      }
  return out;
}

}  // namespace

double dice_score(const torch::Tensor& pred_labels, const torch::Tensor& gt_labels, int cls) {
  if (pred_labels.sizes() != gt_labels.sizes()) throw ShapeError("dice_score: label maps differ in shape");
  const auto a = pred_labels == cls;
  const auto b = gt_labels == cls;
  const auto na = count(a), nb = count(b);
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(count(a & b)) / static_cast<double>(na + nb);
}

PrecisionSensitivity precision_sensitivity(const torch::Tensor& pred_labels, const torch::Tensor& gt_labels, int cls) {
  if (pred_labels.sizes() != gt_labels.sizes()) throw ShapeError("precision_sensitivity: label maps differ in shape");
  const auto a = pred_labels == cls;
  const auto b = gt_labels == cls;
  const auto tp = count(a & b);
  const auto fp = count(a & ~b);
  const auto fn = count(~a & b);
  PrecisionSensitivity r;
  if (tp + fp == 0) {
    r.precision_defined = false;
  } else {
    r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    r.sensitivity_defined = false;
  } else {
    r.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  return r;
}

std::vector<std::array<int64_t, 3>> boundary_voxels(const torch::Tensor& mask) {
  const auto flags = boundary_flags(mask);
  const int64_t H = mask.size(1), W = mask.size(2);
  std::vector<std::array<int64_t, 3>> out;
  for (size_t i = 0; i < flags.size(); ++i) {
    if (!flags[i]) continue;
    const auto idx = static_cast<int64_t>(i);
    out.push_back({idx / (H * W), (idx / W) % H, idx % W});
  }
  return out;
}

std::vector<double> directed_surface_distances(const torch::Tensor& from, const torch::Tensor& to,
                                               const Spacing3& spacing) {
  if (from.sizes() != to.sizes()) throw ShapeError("surface distances: masks differ in shape");
  const Shape3 shape{from.size(0), from.size(1), from.size(2)};
  const auto from_b = boundary_flags(from);
  const auto to_b = boundary_flags(to);
  const auto sq = squared_edt(to_b, shape, spacing);
  std::vector<double> out;
  for (size_t i = 0; i < from_b.size(); ++i)
    if (from_b[i]) out.push_back(std::sqrt(sq[i]));
  return out;
}

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(rank));
  const auto hi = static_cast<size_t>(std::ceil(rank));
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Hd95Result hd95(const torch::Tensor& pred_mask, const torch::Tensor& gt_mask, const Spacing3& spacing) {
  const auto a = as_mask(pred_mask);
  const auto b = as_mask(gt_mask);
  if (a.sizes() != b.sizes()) throw ShapeError("hd95: masks differ in shape");
  if (count(a) == 0 || count(b) == 0) {
    double diag = 0.0;
    for (int k = 0; k < 3; ++k) diag += std::pow(static_cast<double>(a.size(k)) * spacing[k], 2);
    return {std::sqrt(diag), false};
  }
  auto pool = directed_surface_distances(a, b, spacing);
  const auto back = directed_surface_distances(b, a, spacing);
  pool.insert(pool.end(), back.begin(), back.end());
  return {percentile_linear(std::move(pool), 95.0), true};
}

// ---------------------------------------------------------------------------

void recompute_means(MetricsReport& r) {
  double d = 0, h = 0, p = 0, s = 0;
  int n = 0;
  for (const auto& [cls, m] : r.per_class) {
    if (cls == 0) continue;
    d += m.dice;
    h += m.hd95;
    p += m.precision;
    s += m.sensitivity;
    ++n;
  }
  if (n == 0) return;
  r.mean_dice = d / n;
  r.mean_hd95 = h / n;
  r.mean_precision = p / n;
  r.mean_sensitivity = s / n;
}

MetricsReport evaluate_labels(const torch::Tensor& pred_labels, const torch::Tensor& gt_labels, int num_classes,
                              const Spacing3& spacing) {
  if (pred_labels.sizes() != gt_labels.sizes() || pred_labels.dim() != 3) {
    throw ShapeError("evaluate_labels: expected two [D, H, W] label maps of equal shape");
  }
  MetricsReport r;
  r.num_classes = num_classes;
  r.cases = 1;
  for (int c = 0; c < num_classes; ++c) {
    ClassMetrics m;
    m.dice = dice_score(pred_labels, gt_labels, c);
    const auto h = hd95(pred_labels == c, gt_labels == c, spacing);
    m.hd95 = h.value;
    m.hd95_undefined = h.defined ? 0 : 1;
    const auto ps = precision_sensitivity(pred_labels, gt_labels, c);
    m.precision = ps.precision;
    m.sensitivity = ps.sensitivity;
    m.precision_undefined = ps.precision_defined ? 0 : 1;
    m.sensitivity_undefined = ps.sensitivity_defined ? 0 : 1;
    r.per_class[c] = m;
  }
  recompute_means(r);
  return r;
}

MetricsReport aggregate_reports(const std::vector<MetricsReport>& reports) {
  MetricsReport out;
  if (reports.empty()) return out;
  out.num_classes = reports.front().num_classes;
  out.context = reports.front().context;
  int total = 0;
  for (const auto& r : reports) total += r.cases;
  for (const auto& r : reports) {
    const double w = static_cast<double>(r.cases) / static_cast<double>(total);
    for (const auto& [cls, m] : r.per_class) {
      auto& acc = out.per_class[cls];
      acc.dice += w * m.dice;
      acc.hd95 += w * m.hd95;
      acc.precision += w * m.precision;
      acc.sensitivity += w * m.sensitivity;
      acc.hd95_undefined += m.hd95_undefined;
      acc.precision_undefined += m.precision_undefined;
      acc.sensitivity_undefined += m.sensitivity_undefined;
    }
  }
  out.cases = total;
  recompute_means(out);
  return out;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [cls, m] : per_class) {
    classes[std::to_string(cls)] = {
        {"dice", m.dice},
        {"hd95", m.hd95},
        {"precision", m.precision},
        {"sensitivity", m.sensitivity},
        {"hd95_undefined", m.hd95_undefined},
        {"precision_undefined", m.precision_undefined},
        {"sensitivity_undefined", m.sensitivity_undefined},
    };
  }
  return {
      {"num_classes", num_classes},
      {"cases", cases},
      {"per_class", classes},
      {"mean", {{"dice", mean_dice}, {"hd95", mean_hd95}, {"precision", mean_precision}, {"sensitivity", mean_sensitivity}}},
      {"context",
       {{"fold", context.fold}, {"split", context.split}, {"overlap", context.overlap}, {"checkpoint", context.checkpoint}}},
  };
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.num_classes = j.at("num_classes").get<int>();
  r.cases = j.at("cases").get<int>();
  for (const auto& [key, v] : j.at("per_class").items()) {
    ClassMetrics m;
    m.dice = v.at("dice").get<double>();
    m.hd95 = v.at("hd95").get<double>();
    m.precision = v.at("precision").get<double>();
    m.sensitivity = v.at("sensitivity").get<double>();
    m.hd95_undefined = v.value("hd95_undefined", 0);
    m.precision_undefined = v.value("precision_undefined", 0);
    m.sensitivity_undefined = v.value("sensitivity_undefined", 0);
    r.per_class[std::stoi(key)] = m;
  }
  const auto& mean = j.at("mean");
  r.mean_dice = mean.at("dice").get<double>();
  r.mean_hd95 = mean.at("hd95").get<double>();
  r.mean_precision = mean.at("precision").get<double>();
  r.mean_sensitivity = mean.at("sensitivity").get<double>();
  const auto& ctx = j.at("context");
  r.context.fold = ctx.value("fold", -1);
  r.context.split = ctx.value("split", std::string());
  r.context.overlap = ctx.value("overlap", 0.5);
  r.context.checkpoint = ctx.value("checkpoint", std::string());
  return r;
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(10) << "Split";
  for (const auto& [cls, _] : per_class)
    if (cls != 0) os << std::right << std::setw(9) << ("C" + std::to_string(cls));
  os << std::setw(9) << "mDice" << std::setw(9) << "mHD95" << std::setw(9) << "mPrec." << std::setw(9) << "mSens."
     << '\n';
  os << std::left << std::setw(10) << (context.split.empty() ? "-" : context.split) << std::right << std::fixed
     << std::setprecision(4);
  for (const auto& [cls, m] : per_class)
    if (cls != 0) os << std::setw(9) << m.dice;
  os << std::setw(9) << mean_dice << std::setw(9) << std::setprecision(2) << mean_hd95 << std::setprecision(4)
     << std::setw(9) << mean_precision << std::setw(9) << mean_sensitivity << '\n';
  return os.str();
}

}  // namespace yct
