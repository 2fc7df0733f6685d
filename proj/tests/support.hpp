#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <torch/torch.h>
#include <unistd.h>

#include "yctnet/config.hpp"
#include "yctnet/volume.hpp"

namespace yct::test {

namespace fs = std::filesystem;

/// Desk preset shrunk to an n^3 input; everything else unchanged.
inline ModelConfig tiny_config(int64_t n = 16) {
  auto c = preset("desk-64");
  c.name = "tiny";
  c.input_size = {n, n, n};
  return c;
}

inline std::pair<Volume, Volume> phantom(int64_t grid, int classes, uint64_t seed, double noise = 0.1) {
  PhantomSpec s;
  s.grid_size = grid;
  s.num_classes = classes;
  s.seed = seed;
  s.noise_sigma = noise;
  return generate_phantom(s);
}

/// Fresh, empty scratch directory unique to this process.
inline fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("yctnet-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline fs::path golden(const std::string& name) { return fs::path(YCT_GOLDEN_DIR) / name; }

/// Goldens are written instead of compared when YCT_UPDATE_GOLDEN is set.
inline bool updating_golden() { return std::getenv("YCT_UPDATE_GOLDEN") != nullptr; }

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace yct::test
