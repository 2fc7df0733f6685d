#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "yctnet/error.hpp"
#include "yctnet/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace yct {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

void byteswap_in_place(char* data, size_t bytes, size_t width) {
  for (size_t i = 0; i + width <= bytes; i += width) std::reverse(data + i, data + i + width);
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(IoErrorKind::unwritable, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoErrorKind::unreadable, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(IoErrorKind::malformed_header, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

void write_volume(const Volume& v, const fs::path& stem) {
  v.validate();
  if (!stem.parent_path().empty()) fs::create_directories(stem.parent_path());
  const bool is_label = v.kind == VolumeKind::label;
  json header = {
      {"shape", {v.data.size(0), v.data.size(1), v.data.size(2), v.data.size(3)}},
      {"spacing", {v.spacing[0], v.spacing[1], v.spacing[2]}},
      {"dtype", is_label ? "int32" : "float32"},
      {"kind", is_label ? "label" : "image"},
      {"order", "C"},
  };
  write_json(header, with_ext(stem, ".json"));

  auto t = v.data.contiguous();
  const size_t bytes = static_cast<size_t>(t.numel()) * 4;
  std::vector<char> buf(bytes);
  std::memcpy(buf.data(), t.data_ptr(), bytes);
  if constexpr (std::endian::native == std::endian::big) byteswap_in_place(buf.data(), bytes, 4);
  std::ofstream out(with_ext(stem, ".raw"), std::ios::binary);
  if (!out) throw IoError(IoErrorKind::unwritable, "cannot write " + with_ext(stem, ".raw").string());
  out.write(buf.data(), static_cast<std::streamsize>(bytes));
}

Volume read_volume(const fs::path& stem) {
  const auto header_path = with_ext(stem, ".json");
  const json h = read_json(header_path);

  std::vector<int64_t> shape;
  Spacing3 spacing{};
  std::string dtype, kind, order;
  try {
    shape = h.at("shape").get<std::vector<int64_t>>();
    const auto sp = h.at("spacing").get<std::vector<double>>();
    if (sp.size() != 3) throw IoError(IoErrorKind::malformed_header, "spacing must have 3 entries");
    std::copy(sp.begin(), sp.end(), spacing.begin());
    dtype = h.at("dtype").get<std::string>();
    kind = h.at("kind").get<std::string>();
    order = h.value("order", std::string("C"));
  } catch (const json::exception& e) {
    throw IoError(IoErrorKind::malformed_header, "malformed header " + header_path.string() + ": " + e.what());
  }
  if (shape.size() != 4 || std::any_of(shape.begin(), shape.end(), [](int64_t s) { return s <= 0; })) {
    throw IoError(IoErrorKind::malformed_header, "header shape must be 4 positive extents [C, D, H, W]");
  }
  if (order != "C") throw IoError(IoErrorKind::malformed_header, "unsupported order '" + order + "'");
  if (kind != "image" && kind != "label") {
    throw IoError(IoErrorKind::malformed_header, "unknown kind '" + kind + "'");
  }
  torch::ScalarType st;
  if (dtype == "float32") {
    st = torch::kFloat32;
  } else if (dtype == "int32") {
    st = torch::kInt32;
  } else {
    throw IoError(IoErrorKind::unsupported_dtype, "unsupported dtype '" + dtype + "'");
  }

  const auto raw_path = with_ext(stem, ".raw");
  std::ifstream in(raw_path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError(IoErrorKind::unreadable, "cannot open " + raw_path.string());
  const auto file_bytes = static_cast<size_t>(in.tellg());
  const size_t expected = static_cast<size_t>(shape[0] * shape[1] * shape[2] * shape[3]) * 4;
  if (file_bytes != expected) {
    throw IoError(IoErrorKind::size_mismatch, "payload " + raw_path.string() + " has " +
                                                  std::to_string(file_bytes) + " bytes, header implies " +
                                                  std::to_string(expected));
  }
  in.seekg(0);
  auto t = torch::empty(shape, torch::TensorOptions().dtype(st));
  in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(expected));
  if constexpr (std::endian::native == std::endian::big) {
    byteswap_in_place(static_cast<char*>(t.data_ptr()), expected, 4);
  }

  Volume v{t, spacing, kind == "label" ? VolumeKind::label : VolumeKind::image};
  if ((v.kind == VolumeKind::label) != (st == torch::kInt32)) {
    throw IoError(IoErrorKind::unsupported_dtype, "dtype '" + dtype + "' does not match kind '" + kind + "'");
  }
  try {
    v.validate();
  } catch (const Error& e) {
    throw IoError(IoErrorKind::malformed_header, e.what());
  }
  return v;
}

// ---------------------------------------------------------------------------

namespace {

std::string case_name(int index, int count) {
  const int width = std::max(3, static_cast<int>(std::to_string(std::max(count - 1, 0)).size()));
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

DatasetManifest write_phantom_dataset(const fs::path& dir, int count, const PhantomSpec& base,
                                      double train_fraction) {
  if (count < 1) throw ConfigError("count: must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("train_fraction: must lie in (0, 1]");
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "labels", ec);
  if (ec || !fs::is_directory(dir / "images")) {
    throw IoError(IoErrorKind::unwritable, "cannot create dataset directory " + dir.string());
  }

  DatasetManifest m;
  m.num_classes = base.num_classes;
  m.grid_size = base.grid_size;
  const int n_train = std::clamp(static_cast<int>(std::lround(train_fraction * count)), 1, count);
  for (int i = 0; i < count; ++i) {
    PhantomSpec spec = base;
    spec.seed = phantom_case_seed(base.seed, i);
    const auto [img, lbl] = generate_phantom(spec);
    const auto name = case_name(i, count);
    write_volume(img, dir / "images" / name);
    write_volume(lbl, dir / "labels" / name);
    (i < n_train ? m.train : m.val).push_back(name);
  }

  json j = {
      {"version", 1},
      {"num_classes", base.num_classes},
      {"grid_size", base.grid_size},
      {"phantom",
       {{"shapes_per_class", base.shapes_per_class}, {"noise_sigma", base.noise_sigma}, {"seed", base.seed}}},
      {"splits", {{"train", m.train}, {"val", m.val}}},
  };
  write_json(j, dir / "manifest.json");
  return m;
}

DatasetManifest read_manifest(const fs::path& dir) {
  const json j = read_json(dir / "manifest.json");
  DatasetManifest m;
  try {
    m.num_classes = j.at("num_classes").get<int>();
    m.grid_size = j.at("grid_size").get<int64_t>();
    m.train = j.at("splits").at("train").get<std::vector<std::string>>();
    m.val = j.at("splits").at("val").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw IoError(IoErrorKind::malformed_header, "malformed manifest in " + dir.string() + ": " + e.what());
  }
  return m;
}

std::vector<Case> load_cases(const fs::path& dir, const std::string& split) {
  const auto m = read_manifest(dir);
  std::vector<std::string> names;
  if (split == "train" || split == "all") names.insert(names.end(), m.train.begin(), m.train.end());
  if (split == "val" || split == "all") names.insert(names.end(), m.val.begin(), m.val.end());
  if (split != "train" && split != "val" && split != "all") {
    throw ConfigError("split: expected train|val|all, got '" + split + "'");
  }
  std::vector<Case> cases;
  cases.reserve(names.size());
  for (const auto& n : names) {
    cases.push_back({n, read_volume(dir / "images" / n), read_volume(dir / "labels" / n)});
  }
  return cases;
}

}  // namespace yct
