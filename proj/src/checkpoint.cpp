#include <bit>
#include <fstream>
#include <map>

#include "yctnet/engine.hpp"
#include "yctnet/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace yct {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in host order");

void save_checkpoint(YCTNet& model, const CheckpointMeta& meta, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "tensors", ec);
  if (ec) throw IoError(IoErrorKind::unwritable, "cannot create checkpoint directory " + dir.string());

  json tensors = json::array();
  for (const auto& item : model->named_parameters()) {
    const auto t = item.value().detach().contiguous().cpu();
    const std::string file = "tensors/" + item.key() + ".raw";
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw IoError(IoErrorKind::unwritable, "cannot write " + (dir / file).string());
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    tensors.push_back({{"name", item.key()},
                       {"shape", t.sizes().vec()},
                       {"dtype", t.scalar_type() == torch::kFloat64 ? "float64" : "float32"},
                       {"file", file}});
  }
  json manifest = {
      {"version", 1},
      {"config", to_document({meta.model, meta.train})},
      {"epoch", meta.epoch},
      {"step", meta.step},
      {"rng_digest", meta.rng_digest},
      {"tensors", tensors},
  };
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError(IoErrorKind::unwritable, "cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError(IoErrorKind::unreadable, "no checkpoint manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(IoErrorKind::malformed_header, std::string("malformed checkpoint manifest: ") + e.what());
  }

  LoadedCheckpoint out;
  const auto doc = parse_config_document(manifest.at("config"));
  out.meta.model = doc.model;
  out.meta.train = doc.train;
  out.meta.epoch = manifest.value("epoch", int64_t{0});
  out.meta.step = manifest.value("step", int64_t{0});
  out.meta.rng_digest = manifest.value("rng_digest", std::string());
  out.model = build_model(doc.model, 0);

  std::map<std::string, json> entries;
  for (const auto& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = e;

  torch::NoGradGuard ng;
  auto params = out.model->named_parameters();
  if (entries.size() != params.size()) {
    throw ConfigError("checkpoint/config mismatch: checkpoint holds " + std::to_string(entries.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& item : params) {
    const auto it = entries.find(item.key());
    if (it == entries.end()) throw ConfigError("checkpoint/config mismatch: missing tensor '" + item.key() + "'");
    const auto shape = it->second.at("shape").get<std::vector<int64_t>>();
    if (shape != item.value().sizes().vec()) {
      throw ConfigError("checkpoint/config mismatch: tensor '" + item.key() + "' has a different shape");
    }
    const auto dtype = it->second.value("dtype", std::string("float32"));
    const auto st = dtype == "float64" ? torch::kFloat64 : torch::kFloat32;
    auto buf = torch::empty(shape, torch::TensorOptions().dtype(st));
    const auto path = dir / it->second.at("file").get<std::string>();
    std::ifstream raw(path, std::ios::binary | std::ios::ate);
    if (!raw) throw IoError(IoErrorKind::unreadable, "cannot open " + path.string());
    const auto bytes = static_cast<size_t>(raw.tellg());
    if (bytes != static_cast<size_t>(buf.numel() * buf.element_size())) {
      throw IoError(IoErrorKind::size_mismatch, "tensor file " + path.string() + " has the wrong byte length");
    }
    raw.seekg(0);
    raw.read(static_cast<char*>(buf.data_ptr()), static_cast<std::streamsize>(bytes));
    if (st != item.value().scalar_type()) out.model->to(st);
    item.value().copy_(buf);
  }
  return out;
}

}  // namespace yct
