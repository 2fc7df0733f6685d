#include "yctnet/volume.hpp"

#include <algorithm>
#include <cmath>

#include "yctnet/error.hpp"

namespace yct {

Volume Volume::image(torch::Tensor data, Spacing3 spacing) {
  Volume v{data.to(torch::kFloat32).contiguous(), spacing, VolumeKind::image};
  v.validate();
  return v;
}

Volume Volume::label(torch::Tensor data, Spacing3 spacing) {
  Volume v{data.to(torch::kInt32).contiguous(), spacing, VolumeKind::label};
  v.validate();
  return v;
}

void Volume::validate() const {
  if (!data.defined() || data.dim() != 4) {
    throw ShapeError("volume data must be a rank-4 [C, D, H, W] tensor");
  }
  for (double s : spacing) {
    if (!(s > 0.0)) throw Error("volume spacing components must be > 0");
  }
  if (kind == VolumeKind::label && data.scalar_type() != torch::kInt32) {
    throw Error("label volumes must be int32");
  }
  if (kind == VolumeKind::image && data.scalar_type() != torch::kFloat32) {
    throw Error("image volumes must be float32");
  }
}

// ---------------------------------------------------------------------------

NormMode parse_norm_mode(const std::string& name) {
  if (name == "zscore") return NormMode::zscore;
  if (name == "minmax") return NormMode::minmax;
  if (name == "window") return NormMode::window;
  throw ConfigError("normalization.mode: expected one of zscore|minmax|window, got '" + name + "'");
}

std::string to_string(NormMode mode) {
  switch (mode) {
    case NormMode::zscore: return "zscore";
    case NormMode::minmax: return "minmax";
    case NormMode::window: return "window";
  }
  return "zscore";
}

namespace {

NormalizeResult minmax(const Volume& v, torch::Tensor x) {
  const double lo = x.min().item<double>();
  const double hi = x.max().item<double>();
  Volume out = v;
  if (hi - lo <= 0.0) {
    out.data = torch::zeros_like(v.data);
    return {out, true};
  }
  out.data = ((x - lo) / (hi - lo)).to(torch::kFloat32).contiguous();
  return {out, false};
}

}  // namespace

NormalizeResult normalize_intensity(const Volume& v, const Normalization& norm) {
  if (v.kind != VolumeKind::image) throw Error("normalize_intensity expects an image volume");
  const auto x = v.data.to(torch::kFloat64);
  switch (norm.mode) {
    case NormMode::zscore: {
      const double mean = x.mean().item<double>();
      const double sd = std::sqrt((x - mean).pow(2).mean().item<double>());
      Volume out = v;
      if (sd <= 0.0) {
        out.data = torch::zeros_like(v.data);
        return {out, true};
      }
      out.data = ((x - mean) / sd).to(torch::kFloat32).contiguous();
      return {out, false};
    }
    case NormMode::minmax:
      return minmax(v, x);
    case NormMode::window:
      if (!(norm.hi > norm.lo)) throw ConfigError("normalization.window: hi must exceed lo");
      return minmax(v, x.clamp(norm.lo, norm.hi));
  }
  return {v, false};
}

// ---------------------------------------------------------------------------

Volume flip(const Volume& v, int axis) {
  Volume out = v;
  out.data = torch::flip(v.data, {axis + 1}).contiguous();
  return out;
}

Volume rot90(const Volume& v, int k, int axis_a, int axis_b) {
  Volume out = v;
  out.data = torch::rot90(v.data, k, {axis_a + 1, axis_b + 1}).contiguous();
  if (k % 2 != 0) std::swap(out.spacing[axis_a], out.spacing[axis_b]);
  return out;
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::pair<Volume, Volume> augment(const Volume& image, const Volume& label, const AugmentConfig& cfg,
                                  std::mt19937_64& rng) {
  if (image.spatial() != label.spatial()) {
    throw ShapeError("augment: image and label spatial shapes differ");
  }
  // Every draw happens unconditionally so the stream position does not
  // depend on which transforms fire.
  Volume img = image;
  Volume lbl = label;
  for (int axis = 0; axis < 3; ++axis) {
    if (uniform01(rng) < cfg.p_flip) {
      img = flip(img, axis);
      lbl = flip(lbl, axis);
    }
  }

  const double u_rot = uniform01(rng);
  const int plane = static_cast<int>(rng() % 3);
  const int k = 1 + static_cast<int>(rng() % 3);
  if (u_rot < cfg.p_rotate) {
    static constexpr int kPlanes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    const int a = kPlanes[plane][0];
    const int b = kPlanes[plane][1];
    const auto s = img.spatial();
    if (s[a] == s[b]) {
      img = rot90(img, k, a, b);
      lbl = rot90(lbl, k, a, b);
    }
  }

  const double u_int = uniform01(rng);
  const double scale = 1.0 + (2.0 * uniform01(rng) - 1.0) * cfg.max_scale;
  const double shift = (2.0 * uniform01(rng) - 1.0) * cfg.max_shift;
  if (u_int < cfg.p_intensity) {
    img.data = (img.data * scale + shift).to(torch::kFloat32).contiguous();
  }
  return {img, lbl};
}

// ---------------------------------------------------------------------------

std::vector<int64_t> axis_offsets(int64_t extent, int64_t roi, double overlap) {
  if (roi <= 0 || roi > extent) {
    throw ShapeError("plan_windows: roi " + std::to_string(roi) + " must lie in [1, " +
                     std::to_string(extent) + "]");
  }
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("overlap must lie in [0, 1)");
  const auto stride = std::max<int64_t>(1, static_cast<int64_t>(std::floor(static_cast<double>(roi) * (1.0 - overlap))));
  std::vector<int64_t> offsets{0};
  while (offsets.back() + roi < extent) {
    offsets.push_back(std::min(offsets.back() + stride, extent - roi));
  }
  return offsets;
}

WindowPlan plan_windows(const Shape3& volume_shape, const Shape3& roi_shape, double overlap) {
  WindowPlan plan{volume_shape, roi_shape, overlap, {}};
  const auto od = axis_offsets(volume_shape[0], roi_shape[0], overlap);
  const auto oh = axis_offsets(volume_shape[1], roi_shape[1], overlap);
  const auto ow = axis_offsets(volume_shape[2], roi_shape[2], overlap);
  plan.offsets.reserve(od.size() * oh.size() * ow.size());
  for (auto d : od)
    for (auto h : oh)
      for (auto w : ow) plan.offsets.push_back({d, h, w});
  return plan;
}

}  // namespace yct
