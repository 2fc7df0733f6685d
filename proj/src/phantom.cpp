#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "yctnet/error.hpp"
#include "yctnet/volume.hpp"

namespace yct {

namespace {

constexpr int kPlacementAttempts = 200;

// mt19937_64 output is fixed by the standard; the conversions below are ours
// so phantoms do not depend on the library's distribution implementations.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int64_t uniform_int(std::mt19937_64& rng, int64_t lo, int64_t hi) {
  return lo + static_cast<int64_t>(rng() % static_cast<uint64_t>(hi - lo + 1));
}

double standard_normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

struct Region {
  bool ellipsoid = false;
  int64_t center[3]{};
  int64_t radius[3]{};

  bool contains(int64_t d, int64_t h, int64_t w) const {
    const int64_t p[3] = {d, h, w};
    if (!ellipsoid) {
      for (int a = 0; a < 3; ++a)
        if (std::llabs(p[a] - center[a]) > radius[a]) return false;
      return true;
    }
    double acc = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double t = static_cast<double>(p[a] - center[a]) / static_cast<double>(radius[a]);
      acc += t * t;
    }
    return acc <= 1.0;
  }
};

}  // namespace

std::pair<Volume, Volume> generate_phantom(const PhantomSpec& spec) {
  if (spec.grid_size < 16) throw ConfigError("phantom.grid_size: must be >= 16");
  if (spec.num_classes < 2) throw ConfigError("phantom.num_classes: must be >= 2");
  if (spec.shapes_per_class < 1) throw ConfigError("phantom.shapes_per_class: must be >= 1");
  if (spec.noise_sigma < 0.0) throw ConfigError("phantom.noise_sigma: must be >= 0");

  const int64_t g = spec.grid_size;
  std::mt19937_64 rng(spec.seed);
  std::vector<int32_t> labels(static_cast<size_t>(g * g * g), 0);
  auto at = [g](int64_t d, int64_t h, int64_t w) { return static_cast<size_t>((d * g + h) * g + w); };

  const int64_t r_min = std::max<int64_t>(2, g / 10);
  const int64_t r_max = std::max<int64_t>(r_min, g / 5);

  for (int cls = 1; cls < spec.num_classes; ++cls) {
    for (int s = 0; s < spec.shapes_per_class; ++s) {
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
        Region r;
        r.ellipsoid = (rng() & 1U) != 0;
        for (int a = 0; a < 3; ++a) {
          r.radius[a] = uniform_int(rng, r_min, r_max);
          r.center[a] = uniform_int(rng, r.radius[a], g - 1 - r.radius[a]);
        }
        bool free = true;
        for (int64_t d = r.center[0] - r.radius[0]; free && d <= r.center[0] + r.radius[0]; ++d)
          for (int64_t h = r.center[1] - r.radius[1]; free && h <= r.center[1] + r.radius[1]; ++h)
            for (int64_t w = r.center[2] - r.radius[2]; free && w <= r.center[2] + r.radius[2]; ++w)
              if (r.contains(d, h, w) && labels[at(d, h, w)] != 0) free = false;
        if (!free) continue;
        for (int64_t d = r.center[0] - r.radius[0]; d <= r.center[0] + r.radius[0]; ++d)
          for (int64_t h = r.center[1] - r.radius[1]; h <= r.center[1] + r.radius[1]; ++h)
            for (int64_t w = r.center[2] - r.radius[2]; w <= r.center[2] + r.radius[2]; ++w)
              if (r.contains(d, h, w)) labels[at(d, h, w)] = cls;
        placed = true;
      }
      if (!placed) {
        throw Error("phantom placement failed for class " + std::to_string(cls) + " (shape " +
                    std::to_string(s + 1) + " of " + std::to_string(spec.shapes_per_class) +
                    ") on a " + std::to_string(g) + "^3 grid");
      }
    }
  }

  std::vector<float> intensities(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    double value = static_cast<double>(labels[i]);
    if (spec.noise_sigma > 0.0) value += spec.noise_sigma * standard_normal(rng);
    intensities[i] = static_cast<float>(value);
  }

  auto img = torch::from_blob(intensities.data(), {1, g, g, g}, torch::kFloat32).clone();
  auto lbl = torch::from_blob(labels.data(), {1, g, g, g}, torch::kInt32).clone();
  return {Volume::image(img), Volume::label(lbl)};
}

uint64_t phantom_case_seed(uint64_t base_seed, int index) {
  // splitmix64 finaliser
  uint64_t z = base_seed + 0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace yct
