#include <malloc.h>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "yctnet/engine.hpp"
#include "yctnet/error.hpp"
#include "yctnet/losses.hpp"

namespace fs = std::filesystem;

namespace yct {

namespace {

std::string rng_digest(const std::mt19937_64& rng) {
  std::ostringstream state;
  state << rng;
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : state.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Fisher-Yates on top of the raw engine output, independent of std::shuffle.
void shuffle(std::vector<size_t>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

double grad_norm(YCTNet& model) {
  double acc = 0.0;
  for (const auto& p : model->parameters()) {
    if (p.grad().defined()) acc += p.grad().to(torch::kFloat64).pow(2).sum().item<double>();
  }
  return std::sqrt(acc);
}

}  // namespace

void configure_runtime(int threads) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  at::set_num_threads(threads);
}

void write_loss_csv(const std::vector<LossPoint>& curve, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(IoErrorKind::unwritable, "cannot write " + path.string());
  out << "step,loss\n";
  out << std::setprecision(17);
  for (const auto& p : curve) out << p.step << ',' << p.loss << '\n';
}

torch::Tensor stack_images(const std::vector<const Case*>& cases, const Normalization& norm) {
  std::vector<torch::Tensor> xs;
  for (const auto* c : cases) xs.push_back(normalize_intensity(c->image, norm).volume.data);
  return torch::stack(xs);
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const std::vector<Case>& dataset,
                  const std::optional<fs::path>& out_dir, const StepHook& hook) {
  validate(model_cfg);
  validate(train_cfg, model_cfg);
  if (dataset.empty()) throw ConfigError("dataset: at least one case is required");
  for (const auto& c : dataset) {
    if (c.image.spatial() != model_cfg.input_size || c.label.spatial() != model_cfg.input_size) {
      throw ShapeError("case '" + c.name + "' is " + format_shape(c.image.spatial()) +
                       "; training windows must match the model input " + format_shape(model_cfg.input_size));
    }
    if (c.image.channels() != model_cfg.in_channels) {
      throw ShapeError("case '" + c.name + "' has " + std::to_string(c.image.channels()) + " channels, model expects " +
                       std::to_string(model_cfg.in_channels));
    }
  }

  configure_runtime(train_cfg.threads);
  TrainResult result;
  result.model = build_model(model_cfg, train_cfg.seed);
  auto& model = result.model;
  model->train();

  torch::optim::AdamW opt(model->parameters(),
                          torch::optim::AdamWOptions(train_cfg.lr).weight_decay(train_cfg.weight_decay));

  std::vector<Case> prepared;
  prepared.reserve(dataset.size());
  for (const auto& c : dataset) prepared.push_back({c.name, normalize_intensity(c.image, train_cfg.normalization).volume, c.label});

  std::mt19937_64 rng(train_cfg.seed ^ 0x5DEECE66DULL);
  const auto n = prepared.size();
  const auto bs = static_cast<size_t>(train_cfg.batch_size);
  const int64_t steps_per_epoch = static_cast<int64_t>((n + bs - 1) / bs);
  const int64_t total = train_cfg.steps > 0 ? train_cfg.steps : steps_per_epoch * train_cfg.epochs;

  std::vector<size_t> order(n);
  size_t cursor = n;  // forces a shuffle on the first step
  CheckpointMeta meta{model_cfg, train_cfg, 0, 0, {}};

  for (int64_t step = 1; step <= total; ++step) {
    std::vector<torch::Tensor> xs, ys;
    for (size_t b = 0; b < bs; ++b) {
      if (cursor >= n) {
        std::iota(order.begin(), order.end(), size_t{0});
        shuffle(order, rng);
        cursor = 0;
      }
      const auto& c = prepared[order[cursor++]];
      Volume img = c.image, lbl = c.label;
      if (train_cfg.augmentation) std::tie(img, lbl) = augment(img, lbl, train_cfg.augment, rng);
      xs.push_back(img.data);
      ys.push_back(one_hot(lbl.data.squeeze(0), model_cfg.num_classes, 0));
    }
    const auto x = torch::stack(xs);
    const auto y = torch::stack(ys);

    opt.zero_grad();
    const auto terms = dice_ce_loss_from_logits(model->forward(x), y);
    const double loss = terms.total.item<double>();
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << step << " (lr " << train_cfg.lr << ", grad-norm n/a)";
      if (out_dir) {
        fs::create_directories(*out_dir);
        std::ofstream(*out_dir / "diagnostic.json")
            << nlohmann::json{{"step", step}, {"lr", train_cfg.lr}, {"loss", "non-finite"}}.dump(2) << '\n';
      }
      throw NumericError(msg.str());
    }
    terms.total.backward();
    const double gnorm = grad_norm(model);
    if (!std::isfinite(gnorm)) {
      std::ostringstream msg;
      msg << "non-finite gradient at step " << step << " (lr " << train_cfg.lr << ", grad-norm " << gnorm << ")";
      if (out_dir) {
        fs::create_directories(*out_dir);
        std::ofstream(*out_dir / "diagnostic.json")
            << nlohmann::json{{"step", step}, {"lr", train_cfg.lr}, {"loss", loss}, {"grad_norm", "non-finite"}}.dump(2)
            << '\n';
      }
      throw NumericError(msg.str());
    }
    if (hook) hook(step, loss, model);
    opt.step();
    result.curve.push_back({step, loss});

    if (out_dir && train_cfg.checkpoint_every > 0 && step % train_cfg.checkpoint_every == 0 && step < total) {
      meta.step = step;
      meta.epoch = (step - 1) / steps_per_epoch + 1;
      meta.rng_digest = rng_digest(rng);
      std::ostringstream name;
      name << "checkpoint-" << std::setw(6) << std::setfill('0') << step;
      save_checkpoint(model, meta, *out_dir / name.str());
    }
  }
  result.steps = total;

  if (out_dir) {
    meta.step = total;
    meta.epoch = (total - 1) / steps_per_epoch + 1;
    meta.rng_digest = rng_digest(rng);
    save_checkpoint(model, meta, *out_dir / "checkpoint");
    write_loss_csv(result.curve, *out_dir / "loss.csv");
  }
  return result;
}

}  // namespace yct
