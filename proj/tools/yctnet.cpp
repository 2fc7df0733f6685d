// yctnet: dataset generation, training, evaluation, ablations and audits.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "yctnet/config.hpp"
#include "yctnet/engine.hpp"
#include "yctnet/error.hpp"
#include "yctnet/model.hpp"
#include "yctnet/volume.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

// A path to a config document, or the name of a built-in preset.
yct::ConfigDocument resolve_config(const std::string& arg) {
  if (fs::exists(arg)) return yct::load_config(arg);
  if (arg == "paper-96" || arg == "desk-64") return {yct::preset(arg), yct::TrainConfig{}};
  throw yct::IoError(yct::IoErrorKind::unreadable, "config: cannot read '" + arg + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw yct::IoError(yct::IoErrorKind::unwritable, "cannot write " + path.string());
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw yct::IoError(yct::IoErrorKind::unwritable, "cannot create output directory " + dir.string());
  }
}

struct Overrides {
  std::optional<int64_t> steps;
  std::optional<int> epochs;
  std::optional<uint64_t> seed;
  std::optional<double> lr;

  void add(CLI::App* cmd) {
    cmd->add_option("--steps", steps, "Override the number of optimisation steps");
    cmd->add_option("--epochs", epochs, "Override the number of epochs");
    cmd->add_option("--seed", seed, "Override the training seed");
    cmd->add_option("--lr", lr, "Override the learning rate");
  }
  void apply(yct::TrainConfig& t) const {
    if (steps) t.steps = *steps;
    if (epochs) t.epochs = *epochs;
    if (seed) t.seed = *seed;
    if (lr) t.lr = *lr;
  }
};

int cmd_phantom(const fs::path& out, int count, int64_t size, int classes, uint64_t seed, double noise) {
  yct::PhantomSpec spec;
  spec.grid_size = size;
  spec.num_classes = classes;
  spec.seed = seed;
  spec.noise_sigma = noise;
  const auto m = yct::write_phantom_dataset(out, count, spec);
  std::cout << "wrote " << count << " cases to " << out.string() << " (train " << m.train.size() << ", val "
            << m.val.size() << ")\n";
  return kOk;
}

int cmd_train(const std::string& config, const fs::path& data, const fs::path& out, const Overrides& ov) {
  auto doc = resolve_config(config);
  ov.apply(doc.train);
  yct::validate(doc.model);
  yct::validate(doc.train, doc.model);
  const auto cases = yct::load_cases(data, "train");
  ensure_dir(out);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = yct::train(doc.model, doc.train, cases, out, [](int64_t step, double loss, yct::YCTNet&) {
    if (step == 1 || step % 10 == 0) std::cout << "step " << step << " loss " << loss << '\n' << std::flush;
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "trained " << result.steps << " steps in " << std::fixed << std::setprecision(1) << secs
            << " s; final loss " << std::setprecision(6) << result.curve.back().loss << '\n';
  return kOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, double overlap, const std::string& split,
             const std::optional<fs::path>& out) {
  const auto cases = yct::load_cases(data, split);
  auto report = yct::evaluate_checkpoint(checkpoint, cases, overlap);
  report.context.split = split;
  const auto table = report.to_table();
  std::cout << table;
  if (out) {
    ensure_dir(*out);
    write_text(*out / "metrics.json", report.to_json().dump(2) + "\n");
    write_text(*out / "table.txt", table);
  }
  return kOk;
}

int cmd_shapes(const std::string& config, const std::optional<fs::path>& out) {
  const auto doc = resolve_config(config);
  const auto trace = yct::trace_shapes(doc.model, 0);
  const auto text = trace.to_text();
  std::cout << text;
  if (out) {
    ensure_dir(*out);
    write_text(*out / "table.txt", text);
  }
  const auto violations = yct::check_shape_laws(doc.model, trace);
  for (const auto& v : violations) {
    std::cerr << "shape law violated: " << v.name << " expected " << v.expected << ", got " << v.actual << '\n';
  }
  return violations.empty() ? kOk : kValidation;
}

int cmd_ablate(const std::string& axis_name, const std::string& config, const fs::path& data,
               const std::optional<fs::path>& out, const Overrides& ov) {
  const auto axis = yct::parse_ablation_axis(axis_name);
  auto doc = resolve_config(config);
  ov.apply(doc.train);
  const auto train_cases = yct::load_cases(data, "train");
  const auto val_cases = yct::load_cases(data, "val");
  const auto table = yct::ablate(axis, doc.model, doc.train, train_cases, val_cases, [](const yct::AblationRow& r) {
    std::cerr << r.variant.label << ": dice " << r.dice << '\n';
  });
  const auto text = table.to_table();
  std::cout << text;
  if (out) {
    ensure_dir(*out);
    write_text(*out / "metrics.json", table.to_json().dump(2) + "\n");
    write_text(*out / "table.txt", text);
  }
  return kOk;
}

int cmd_gradcheck(const std::string& config, int64_t size, int params, uint64_t seed,
                  const std::optional<fs::path>& out) {
  auto doc = resolve_config(config);
  doc.model.input_size = {size, size, size};
  yct::validate(doc.model);
  yct::PhantomSpec spec;
  spec.grid_size = size;
  spec.num_classes = doc.model.num_classes;
  spec.seed = seed;
  const auto [img, lbl] = yct::generate_phantom(spec);
  const auto report = yct::grad_check(doc.model, img.data, lbl.data[0], params, seed);
  std::cout << "checked " << report.checked << " parameters";
  for (const auto& [g, n] : report.per_group) std::cout << ' ' << yct::to_string(g) << '=' << n;
  std::cout << "\nmax relative error " << std::scientific << report.max_rel_err << " (tolerance "
            << report.tolerance << ") " << (report.passed() ? "PASS" : "FAIL") << '\n';
  if (out) {
    ensure_dir(*out);
    write_text(*out / "metrics.json", report.to_json().dump(2) + "\n");
  }
  return report.passed() ? kOk : kValidation;
}

int cmd_cv(const std::string& config, const fs::path& data, int folds, const std::optional<fs::path>& out,
           const Overrides& ov) {
  auto doc = resolve_config(config);
  ov.apply(doc.train);
  if (folds > 0) doc.train.folds = folds;
  const auto cases = yct::load_cases(data, "all");
  const auto result = yct::cross_validate(doc.model, doc.train, cases, doc.train.folds);
  const auto text = result.to_table();
  std::cout << text;
  if (out) {
    ensure_dir(*out);
    write_text(*out / "metrics.json", result.to_json().dump(2) + "\n");
    write_text(*out / "table.txt", text);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Y-CT-Net volumetric segmentation"};
  app.require_subcommand(1);

  fs::path out, data, checkpoint;
  std::optional<fs::path> out_opt;
  std::string config, axis, split = "val";
  int count = 50, classes = 4, params = 100, folds = 0;
  int64_t size = 64;
  uint64_t seed = 0;
  double noise = 0.1, overlap = 0.5;
  Overrides ov;

  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom dataset");
  phantom->add_option("--out", out, "Dataset directory")->required();
  phantom->add_option("--count", count, "Number of cases")->check(CLI::PositiveNumber);
  phantom->add_option("--size", size, "Grid edge length in voxels")->check(CLI::Range(int64_t{8}, int64_t{1024}));
  phantom->add_option("--classes", classes, "Number of classes including background")->check(CLI::Range(2, 64));
  phantom->add_option("--seed", seed, "Base seed");
  phantom->add_option("--noise", noise, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config, "Config file or preset name")->required();
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--out", out, "Output directory")->required();
  ov.add(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--overlap", overlap, "Sliding-window overlap")->check(CLI::Range(0.0, 0.99));
  eval->add_option("--split", split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));
  eval->add_option("--out", out_opt, "Directory for metrics.json and table.txt");

  auto* shapes = app.add_subcommand("shapes", "Audit feature-map shapes");
  shapes->add_option("--config", config, "Config file or preset name")->required();
  shapes->add_option("--out", out_opt, "Directory for table.txt");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation sweep");
  ablate->add_option("--axis", axis, "mixing_method, mixing_position, multi_cfmm or block_counts")->required();
  ablate->add_option("--config", config, "Config file or preset name")->required();
  ablate->add_option("--data", data, "Dataset directory")->required();
  ablate->add_option("--out", out_opt, "Directory for metrics.json and table.txt");
  ov.add(ablate);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gradcheck->add_option("--config", config, "Config file or preset name")->required();
  gradcheck->add_option("--size", size, "Input edge length for the check")->default_val(16);
  gradcheck->add_option("--params", params, "Number of scalar parameters")->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", seed, "Seed for weights, data and sampling");
  gradcheck->add_option("--out", out_opt, "Directory for metrics.json");

  auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
  cv->add_option("--config", config, "Config file or preset name")->required();
  cv->add_option("--data", data, "Dataset directory")->required();
  cv->add_option("--folds", folds, "Number of folds (default from config)");
  cv->add_option("--out", out_opt, "Directory for metrics.json and table.txt");
  ov.add(cv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    yct::configure_runtime(1);
    if (*phantom) return cmd_phantom(out, count, size, classes, seed, noise);
    if (*train) return cmd_train(config, data, out, ov);
    if (*eval) return cmd_eval(checkpoint, data, overlap, split, out_opt);
    if (*shapes) return cmd_shapes(config, out_opt);
    if (*ablate) return cmd_ablate(axis, config, data, out_opt, ov);
    if (*gradcheck) return cmd_gradcheck(config, size, params, seed, out_opt);
    if (*cv) return cmd_cv(config, data, folds, out_opt, ov);
  } catch (const yct::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const yct::ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
