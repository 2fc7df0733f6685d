// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fail.
//
//   acceptance [--work DIR] [--only 1,4,7] [--ablation-steps N]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "oracles.hpp"
#include "yctnet/cfmm.hpp"
#include "yctnet/config.hpp"
#include "yctnet/engine.hpp"
#include "yctnet/losses.hpp"
#include "yctnet/metrics.hpp"
#include "yctnet/model.hpp"

namespace fs = std::filesystem;
using namespace yct;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

fs::path g_work;
int64_t g_ablation_steps = 0;

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

ModelConfig shrunk_desk(int64_t n) {
  auto c = preset("desk-64");
  c.name = "desk-" + std::to_string(n);
  c.input_size = {n, n, n};
  return c;
}

std::pair<Volume, Volume> make_phantom(int64_t grid, uint64_t seed) {
  PhantomSpec s;
  s.grid_size = grid;
  s.num_classes = 4;
  s.seed = seed;
  return generate_phantom(s);
}

std::vector<Case> make_cases(int n, int64_t grid, uint64_t seed) {
  std::vector<Case> out;
  for (int i = 0; i < n; ++i) {
    auto [img, lbl] = make_phantom(grid, phantom_case_seed(seed, i));
    out.push_back({"case_" + std::to_string(i), img, lbl});
  }
  return out;
}

TrainConfig desk_train() { return load_config(fs::path(YCT_CONFIG_DIR) / "desk-64.json").train; }

// Distance between two floats in units in the last place.
int64_t ulps(float a, float b) {
  if (a == b) return 0;
  int32_t ia, ib;
  std::memcpy(&ia, &a, 4);
  std::memcpy(&ib, &b, 4);
  if (ia < 0) ia = INT32_MIN - ia;
  if (ib < 0) ib = INT32_MIN - ib;
  return std::llabs(static_cast<int64_t>(ia) - ib);
}

// ---------------------------------------------------------------------------

Outcome shape_laws() {
  const auto doc = load_config(fs::path(YCT_CONFIG_DIR) / "paper-96.json");
  const auto trace = trace_shapes(doc.model);
  const int64_t J = doc.model.num_classes;
  const std::vector<std::pair<std::string, std::vector<int64_t>>> want = {
      {"F_L2", {64, 24, 24, 24}},    {"F_L3", {128, 12, 12, 12}},   {"F_G2", {64, 24, 24, 24}},
      {"F_G3", {128, 12, 12, 12}},   {"F_mix22", {64, 24, 24, 24}}, {"F_mix33", {128, 12, 12, 12}},
      {"logits", {J, 96, 96, 96}}};
  std::string bad;
  for (const auto& [name, shape] : want) {
    const auto* got = trace.find(name);  // [N, C, D, H, W]
    if (!got || std::vector<int64_t>(got->begin() + 1, got->end()) != shape) bad += " " + name;
  }
  const auto violations = check_shape_laws(doc.model, trace);
  if (!violations.empty()) bad += " (" + std::to_string(violations.size()) + " law violations)";
  return {bad.empty(), bad.empty() ? "7/7 maps match, no law violations" : "mismatch:" + bad};
}

Outcome grad_check_criterion() {
  auto [img, lbl] = make_phantom(16, 21);
  const auto base = grad_check(shrunk_desk(16), img.data, lbl.data[0], 100, 0);
  auto cat_cfg = shrunk_desk(16);
  cat_cfg.mixing.method = MixMethod::concatenation;
  const auto cat = grad_check(cat_cfg, img.data, lbl.data[0], 100, 0);
  std::ostringstream os;
  os << "addition max rel err " << fmt(base.max_rel_err) << " over " << base.checked << ", concatenation "
     << fmt(cat.max_rel_err) << " over " << cat.checked << " (cfmm " << cat.per_group.at(ParamGroup::cfmm)
     << "), tol 1e-3; " << base.kinks + cat.kinks << " ReLU kinks judged one-sided";
  return {base.checked == 100 && cat.checked == 100 && base.passed() && cat.passed(), os.str()};
}

Outcome gradient_flow_criterion() {
  auto [img, lbl] = make_phantom(64, 22);
  bool ok = true;
  std::ostringstream os;
  for (auto method : {MixMethod::addition, MixMethod::concatenation}) {
    auto cfg = preset("desk-64");
    cfg.mixing.method = method;
    auto model = build_model(cfg, 0);
    const auto flow = gradient_flow(model, img.data, lbl.data[0]);
    os << to_string(method) << ":";
    for (auto g : {ParamGroup::local, ParamGroup::global, ParamGroup::cfmm, ParamGroup::decoder}) {
      const auto it = flow.find(g);
      if (it == flow.end()) {
        // Parameter-free mixers have nothing to check.
        if (!(g == ParamGroup::cfmm && method == MixMethod::addition)) ok = false;
        os << " " << to_string(g) << "=n/a";
        continue;
      }
      ok = ok && it->second >= 0.99;
      os << " " << to_string(g) << "=" << fmt(it->second, 5);
    }
    os << "; ";
  }
  return {ok, os.str() + "threshold 0.99"};
}

Outcome cfmm_oracles() {
  torch::manual_seed(4);
  int64_t worst = 0;
  for (auto method : {MixMethod::addition, MixMethod::averaging, MixMethod::hadamard}) {
    torch::NoGradGuard ng;
    PairMixer mix(method, 8, 8);
    for (int rep = 0; rep < 100; ++rep) {
      const auto a = torch::randn({1, 8, 4, 4, 4});
      const auto b = torch::randn({1, 8, 4, 4, 4});
      const auto y = mix(a, b).contiguous();
      const float* pa = a.data_ptr<float>();
      const float* pb = b.data_ptr<float>();
      const float* py = y.data_ptr<float>();
      for (int64_t i = 0; i < a.numel(); ++i) {
        float want = 0.f;
        switch (method) {
          case MixMethod::addition: want = pa[i] + pb[i]; break;
          case MixMethod::averaging: want = (pa[i] + pb[i]) / 2.f; break;
          default: want = pa[i] * pb[i]; break;
        }
        worst = std::max(worst, ulps(py[i], want));
      }
    }
  }
  bool contracts = true;
  for (auto method : {MixMethod::concatenation, MixMethod::self_attention}) {
    for (int64_t cl : {8, 6}) {
      PairMixer mix(method, cl, 8);
      for (int rep = 0; rep < 100; ++rep) {
        const auto a = torch::randn({1, cl, 4, 4, 4}, torch::requires_grad());
        const auto b = torch::randn({1, 8, 4, 4, 4}, torch::requires_grad());
        const auto y = mix(a, b);
        contracts = contracts && y.sizes() == b.sizes();
        (y * torch::randn_like(y)).sum().backward();
        contracts = contracts && a.grad().abs().sum().item<double>() > 0 && b.grad().abs().sum().item<double>() > 0;
      }
    }
  }
  return {worst <= 1 && contracts, "elementwise max " + std::to_string(worst) +
                                       " ulp over 3x100 pairs; concat/self-attention contracts " +
                                       (contracts ? "hold" : "broken")};
}

Outcome loss_oracle() {
  torch::manual_seed(5);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = torch::softmax(torch::randn({3, 4, 4, 4}, torch::kFloat64) * 2.0, 0);
    const auto g = one_hot(torch::randint(0, 3, {4, 4, 4}, torch::kLong), 3, 0).to(torch::kFloat64);
    worst = std::max(worst, std::abs(dice_ce_loss(p, g).item<double>() - oracle::dice_ce(p, g)));
  }
  const auto g = one_hot(torch::randint(0, 3, {4, 4, 4}, torch::kLong), 3, 0).to(torch::kFloat64);
  const double perfect = dice_ce_loss(g, g).item<double>();
  const auto uniform = dice_ce_loss_terms(torch::full({3, 4, 4, 4}, 1.0 / 3.0, torch::kFloat64), g);
  const double ce_err = std::abs(uniform.ce.item<double>() - std::log(3.0));
  std::ostringstream os;
  os << "oracle max |diff| " << fmt(worst) << " (tol 1e-10), perfect " << fmt(perfect) << " (<= 1e-6), |CE - ln 3| "
     << fmt(ce_err) << " (tol 1e-9)";
  return {worst <= 1e-10 && perfect <= 1e-6 && ce_err <= 1e-9, os.str()};
}

Outcome hd95_oracle() {
  torch::manual_seed(6);
  double worst = 0.0;
  bool symmetric = true;
  int compared = 0;
  while (compared < 100) {
    const auto dims = torch::randint(2, 17, {3}, torch::kLong);
    const int64_t D = dims[0].item<int64_t>(), H = dims[1].item<int64_t>(), W = dims[2].item<int64_t>();
    const double fa = torch::rand({1}).item<double>() * 0.6 + 0.1;
    const auto a = torch::rand({D, H, W}) < fa;
    const auto b = torch::rand({D, H, W}) < fa;
    if (!a.any().item<bool>() || !b.any().item<bool>()) continue;
    const Spacing3 sp{0.5 + torch::rand({1}).item<double>(), 0.5 + torch::rand({1}).item<double>(),
                      0.5 + torch::rand({1}).item<double>()};
    const double ab = hd95(a, b, sp).value;
    symmetric = symmetric && ab == hd95(b, a, sp).value;
    worst = std::max(worst, std::abs(ab - oracle::hd95(a, b, sp)));
    ++compared;
  }
  return {worst <= 1e-9 && symmetric,
          "100 pairs, max |diff| " + fmt(worst) + " mm (tol 1e-9), symmetry " + (symmetric ? "exact" : "broken")};
}

Outcome sliding_window_criterion() {
  const auto stub = [](const torch::Tensor& x) {
    auto p = torch::tensor({0.1f, 0.2f, 0.3f, 0.4f}).view({1, 4, 1, 1, 1});
    return p.expand({1, 4, x.size(2), x.size(3), x.size(4)}).contiguous();
  };
  double worst = 0.0;
  int audits = 0, uncovered = 0;
  for (int64_t n = 33; n <= 48; ++n) {
    const auto img = torch::zeros({1, n, n, n});
    const auto direct = stub(img.unsqueeze(0))[0];
    for (double ov : {0.0, 0.25, 0.5}) {
      for (bool gaussian : {false, true}) {
        torch::Tensor cov;
        StitchOptions o;
        o.gaussian = gaussian;
        o.coverage = &cov;
        const auto out = sliding_window_inference(img, {32, 32, 32}, ov, stub, o);
        worst = std::max(worst, (out - direct).abs().max().item<double>());
        if (!gaussian) {
          ++audits;
          if (cov.min().item<int>() < 1) ++uncovered;
        }
      }
    }
  }
  return {worst <= 1e-6 && uncovered == 0, "stub max |stitched - direct| " + fmt(worst) + " (tol 1e-6); " +
                                               std::to_string(audits - uncovered) + "/" + std::to_string(audits) +
                                               " coverage audits pass"};
}

Outcome overfit() {
  auto t = desk_train();
  t.steps = 200;
  const auto cases = make_cases(1, 64, 8);
  auto r = train(preset("desk-64"), t, cases, g_work / "overfit");
  const auto report = evaluate(r.model, cases, t.overlap, t.normalization);
  return {report.mean_dice >= 0.95, "single phantom, 200 steps: final loss " + fmt(r.curve.back().loss) +
                                        ", foreground Dice " + fmt(report.mean_dice) + " (>= 0.95)"};
}

Outcome generalization() {
  auto t = desk_train();
  t.steps = 0;
  t.epochs = 5;
  const auto all = make_cases(50, 64, 9);
  const std::vector<Case> tr(all.begin(), all.begin() + 40), va(all.begin() + 40, all.end());
  auto r = train(preset("desk-64"), t, tr, g_work / "generalization");
  const auto report = evaluate(r.model, va, t.overlap, t.normalization);
  std::ofstream(g_work / "generalization" / "metrics.json") << report.to_json().dump(2) << '\n';
  return {report.mean_dice >= 0.85, "40/10 phantoms, 5 epochs (" + std::to_string(r.steps) +
                                        " steps): validation foreground Dice " + fmt(report.mean_dice) +
                                        " (>= 0.85)"};
}

Outcome ablation() {
  const auto doc = load_config(fs::path(YCT_CONFIG_DIR) / "smoke-32.json");
  auto t = doc.train;
  if (g_ablation_steps > 0) t.steps = g_ablation_steps;
  const auto all = make_cases(15, 32, 11);
  const std::vector<Case> tr(all.begin(), all.begin() + 12), va(all.begin() + 12, all.end());

  const auto methods = ablate(AblationAxis::mixing_method, doc.model, t, tr, va);
  const auto text = methods.to_table();
  fs::create_directories(g_work / "ablation");
  std::ofstream(g_work / "ablation" / "mixing_method.txt") << text;
  bool ok = methods.rows.size() == 5 && text.find("paper reference") != std::string::npos;
  std::ostringstream os;
  os << "mixing_method Dice:";
  for (const auto& r : methods.rows) {
    ok = ok && r.dice >= 0.5;
    os << " " << r.variant.label << "=" << fmt(r.dice, 3);
  }
  for (const char* ref : {"0.8392", "0.8008", "0.8390", "0.7930", "0.8071"})
    ok = ok && text.find(ref) != std::string::npos;

  const auto blocks = ablate(AblationAxis::block_counts, doc.model, t, tr, va);
  std::ofstream(g_work / "ablation" / "block_counts.txt") << blocks.to_table();
  ok = ok && blocks.rows.size() == 7;
  os << "; block_counts rows " << blocks.rows.size() << "/7; " << t.steps << " steps at 32^3";
  return {ok, os.str()};
}

Outcome determinism() {
  auto t = desk_train();
  t.steps = 6;
  const auto cases = make_cases(2, 64, 12);
  train(preset("desk-64"), t, cases, g_work / "determinism-a");
  auto b = train(preset("desk-64"), t, cases, g_work / "determinism-b");
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const bool same_csv = slurp(g_work / "determinism-a" / "loss.csv") == slurp(g_work / "determinism-b" / "loss.csv");

  auto loaded = load_checkpoint(g_work / "determinism-b" / "checkpoint");
  torch::NoGradGuard ng;
  torch::manual_seed(13);
  const auto x = torch::randn({1, 1, 64, 64, 64});
  b.model->eval();
  loaded.model->eval();
  const auto ya = b.model->forward(x).contiguous();
  const auto yb = loaded.model->forward(x).contiguous();
  const bool bitwise = ya.sizes() == yb.sizes() &&
                       std::memcmp(ya.data_ptr(), yb.data_ptr(), ya.numel() * sizeof(float)) == 0;
  return {same_csv && bitwise, std::string("loss CSVs ") + (same_csv ? "identical" : "differ") +
                                   ", reloaded forward " + (bitwise ? "bitwise identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Y-CT-Net acceptance criteria"};
  std::string work = (fs::temp_directory_path() / "yctnet-acceptance").string();
  std::string only;
  app.add_option("--work", work, "scratch directory for training artifacts");
  app.add_option("--only", only, "comma-separated criterion ids");
  app.add_option("--ablation-steps", g_ablation_steps, "override the ablation step budget");
  CLI11_PARSE(app, argc, argv);

  configure_runtime(1);
  g_work = work;
  fs::create_directories(g_work);

  std::set<int> selected;
  std::stringstream ss(only);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) selected.insert(std::stoi(tok));

  const std::vector<Criterion> criteria = {
      {1, "shape laws (paper-96)", 60, shape_laws},
      {2, "gradient check (16^3, 100 params)", 300, grad_check_criterion},
      {3, "gradient flow", 60, gradient_flow_criterion},
      {4, "CFMM oracles", 60, cfmm_oracles},
      {5, "loss oracle", 60, loss_oracle},
      {6, "HD95 oracle", 120, hd95_oracle},
      {7, "sliding window", 120, sliding_window_criterion},
      {8, "overfit single phantom", 600, overfit},
      {9, "generalization smoke", 2700, generalization},
      {10, "ablation harness", 4 * 3600, ablation},
      {11, "determinism and persistence", 300, determinism},
  };

  // ctest hides stdout of passing tests, so keep a copy next to the artifacts.
  std::filesystem::create_directories(g_work);
  std::FILE* summary = std::fopen((g_work / "summary.txt").c_str(), "w");
  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    for (std::FILE* f : {stdout, summary}) {
      if (!f) continue;
      std::fprintf(f, "[%s] %2d %-36s %8.1fs (budget %.0fs%s)  %s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                   secs, c.budget_s, in_budget ? "" : ", EXCEEDED", o.detail.c_str());
      std::fflush(f);
    }
  }
  std::printf("acceptance: %d/%d passed\n", ran - failed, ran);
  if (summary) {
    std::fprintf(summary, "acceptance: %d/%d passed\n", ran - failed, ran);
    std::fclose(summary);
  }
  return failed ? 1 : 0;
}
