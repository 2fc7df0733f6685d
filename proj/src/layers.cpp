#include "yctnet/layers.hpp"

#include <sstream>

namespace yct {

std::string format_shape(const Shape3& s) {
  return std::to_string(s[0]) + "x" + std::to_string(s[1]) + "x" + std::to_string(s[2]);
}

std::string format_feature_shape(const torch::Tensor& t) {
  std::string out;
  for (int64_t d = 1; d < t.dim(); ++d) out += (d > 1 ? "x" : "") + std::to_string(t.size(d));
  return out;
}

void ShapeTrace::record(std::string name, const torch::Tensor& t) {
  entries_.emplace_back(std::move(name), t.sizes().vec());
}

const std::vector<int64_t>* ShapeTrace::find(const std::string& name) const {
  for (const auto& [n, s] : entries_)
    if (n == name) return &s;
  return nullptr;
}

std::string ShapeTrace::to_text() const {
  std::ostringstream os;
  for (const auto& [name, sizes] : entries_) {
    os << name << ' ';
    for (size_t d = 1; d < sizes.size(); ++d) os << (d > 1 ? "x" : "") << sizes[d];
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

torch::nn::Conv3d conv3(int64_t in, int64_t out, int64_t stride) {
  return torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

torch::nn::InstanceNorm3d inorm(int64_t ch) {
  return torch::nn::InstanceNorm3d(torch::nn::InstanceNorm3dOptions(ch).affine(true));
}

}  // namespace

ConvNormActImpl::ConvNormActImpl(int64_t in_channels, int64_t out_channels, int64_t stride)
    : conv(register_module("conv", conv3(in_channels, out_channels, stride))),
      norm(register_module("norm", inorm(out_channels))) {}

torch::Tensor ConvNormActImpl::forward(const torch::Tensor& x) { return torch::relu(norm(conv(x))); }

ResidualBlockImpl::ResidualBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride, bool zero_init)
    : conv1(register_module("conv1", conv3(in_channels, out_channels, stride))),
      conv2(register_module("conv2", conv3(out_channels, out_channels, 1))),
      norm1(register_module("norm1", inorm(out_channels))),
      norm2(register_module("norm2", inorm(out_channels))) {
  if (in_channels != out_channels || stride != 1) {
    shortcut = register_module(
        "shortcut", torch::nn::Conv3d(torch::nn::Conv3dOptions(in_channels, out_channels, 1).stride(stride).bias(false)));
  }
  if (zero_init) zero_last_norm();
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto branch = torch::relu(norm1(conv1(x)));
  branch = torch::relu(norm2(conv2(branch)));
  return (shortcut.is_empty() ? x : shortcut(x)) + branch;
}

void ResidualBlockImpl::zero_last_norm() {
  torch::NoGradGuard ng;
  norm2->weight.zero_();
  norm2->bias.zero_();
}

torch::nn::ConvTranspose3d make_upsample(int64_t in_channels, int64_t out_channels) {
  return torch::nn::ConvTranspose3d(torch::nn::ConvTranspose3dOptions(in_channels, out_channels, 2).stride(2));
}

}  // namespace yct
