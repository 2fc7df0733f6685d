#include <iomanip>
#include <sstream>

#include "yctnet/engine.hpp"
#include "yctnet/error.hpp"

namespace yct {

AblationAxis parse_ablation_axis(const std::string& name) {
  if (name == "mixing_method") return AblationAxis::mixing_method;
  if (name == "mixing_position") return AblationAxis::mixing_position;
  if (name == "multi_cfmm") return AblationAxis::multi_cfmm;
  if (name == "block_counts") return AblationAxis::block_counts;
  throw ConfigError("axis: unknown ablation axis '" + name +
                    "' (expected mixing_method, mixing_position, multi_cfmm or block_counts)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::mixing_method: return "mixing_method";
    case AblationAxis::mixing_position: return "mixing_position";
    case AblationAxis::multi_cfmm: return "multi_cfmm";
    case AblationAxis::block_counts: return "block_counts";
  }
  return "?";
}

namespace {

std::string pair_label(const StagePair& p) {
  return "(L" + std::to_string(p.local_stage) + ",G" + std::to_string(p.global_stage) + ")";
}

std::string pair_detail(const ModelConfig& cfg, const StagePair& p) {
  return "(" + format_shape(cfg.spatial_at(p.local_stage)) + "), (" + format_shape(cfg.spatial_at(p.global_stage)) +
         ")";
}

std::string counts_label(const std::vector<int>& counts) {
  std::string s = "[";
  for (size_t i = 0; i < counts.size(); ++i) s += (i ? ", " : "") + std::to_string(counts[i]);
  return s + "]";
}

}  // namespace

std::vector<AblationVariant> ablation_variants(AblationAxis axis, const ModelConfig& base) {
  std::vector<AblationVariant> out;
  switch (axis) {
    case AblationAxis::mixing_method: {
      const std::pair<MixMethod, double> rows[] = {{MixMethod::addition, 0.8392},
                                                   {MixMethod::averaging, 0.8008},
                                                   {MixMethod::concatenation, 0.8390},
                                                   {MixMethod::hadamard, 0.7930},
                                                   {MixMethod::self_attention, 0.8071}};
      for (const auto& [m, ref] : rows) {
        auto cfg = base;
        cfg.mixing.method = m;
        out.push_back({display_name(m), to_string(m), cfg, ref});
      }
      break;
    }
    case AblationAxis::mixing_position: {
      const std::pair<StagePair, double> rows[] = {
          {{2, 2}, 0.824}, {{3, 2}, 0.807}, {{4, 2}, 0.798}, {{5, 2}, 0.791}};
      for (const auto& [p, ref] : rows) {
        auto cfg = base;
        cfg.mixing.pairs = {p};
        cfg.mixing.align = MixAlign::resample;
        // Deeper local stages only exist if the encoder reaches them.
        while (cfg.deepest_local_stage() < p.local_stage) cfg.block_counts.push_back(1);
        out.push_back({pair_label(p), pair_detail(cfg, p), cfg, ref});
      }
      break;
    }
    case AblationAxis::multi_cfmm: {
      const std::pair<std::vector<StagePair>, double> rows[] = {
          {{{2, 2}}, 0.824}, {{{3, 3}}, 0.823}, {{{2, 2}, {3, 3}}, 0.839}};
      for (const auto& [pairs, ref] : rows) {
        auto cfg = base;
        cfg.mixing.pairs = pairs;
        std::string label, detail;
        for (const auto& p : pairs) {
          label += (label.empty() ? "" : " + ") + pair_label(p);
          detail += (detail.empty() ? "" : "; ") + pair_detail(cfg, p);
        }
        out.push_back({label, detail, cfg, ref});
      }
      break;
    }
    case AblationAxis::block_counts: {
      const std::pair<std::vector<int>, double> rows[] = {{{2, 2}, 0.782}, {{2, 4}, 0.801},  {{4, 4}, 0.839},
                                                          {{4, 8}, 0.841}, {{8, 8}, 0.831},  {{4, 16}, 0.862},
                                                          {{4, 24}, 0.854}};
      for (const auto& [counts, ref] : rows) {
        auto cfg = base;
        cfg.block_counts = counts;
        out.push_back({counts_label(counts), "stages 2-3", cfg, ref});
      }
      break;
    }
  }
  for (auto& v : out) validate(v.config);
  return out;
}

AblationTable ablate(AblationAxis axis, const ModelConfig& base, const TrainConfig& train_cfg,
                     const std::vector<Case>& train_cases, const std::vector<Case>& val_cases,
                     const std::function<void(const AblationRow&)>& on_row) {
  if (val_cases.empty()) throw ConfigError("ablation: validation split is empty");
  AblationTable table;
  table.axis = axis;
  for (auto& v : ablation_variants(axis, base)) {
    auto trained = train(v.config, train_cfg, train_cases);
    const auto report =
        evaluate(trained.model, val_cases, train_cfg.overlap, train_cfg.normalization, train_cfg.gaussian_blend);
    AblationRow row{std::move(v), report.mean_dice, count_parameters(*trained.model),
                    trained.curve.empty() ? 0.0 : trained.curve.back().loss};
    if (on_row) on_row(row);
    table.rows.push_back(std::move(row));
  }
  return table;
}

nlohmann::json AblationTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"variant", r.variant.label},
                         {"detail", r.variant.detail},
                         {"dice", r.dice},
                         {"parameters", r.parameters},
                         {"final_loss", r.final_loss},
                         {"paper_reference", r.variant.paper_reference}});
  }
  return {{"axis", to_string(axis)},
          {"rows", rows_json},
          {"paper_reference_note", "paper reference, not reproduced"}};
}

std::string AblationTable::to_table() const {
  size_t w_label = 8, w_detail = 6;
  for (const auto& r : rows) {
    w_label = std::max(w_label, r.variant.label.size());
    w_detail = std::max(w_detail, r.variant.detail.size());
  }
  std::ostringstream os;
  os << "Axis: " << to_string(axis) << '\n';
  os << std::left << std::setw(static_cast<int>(w_label + 2)) << "Variant" << std::setw(static_cast<int>(w_detail + 2))
     << "Detail" << std::right << std::setw(12) << "Params" << std::setw(9) << "Dice" << std::setw(11) << "Loss"
     << "  paper reference, not reproduced\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(w_label + 2)) << r.variant.label
       << std::setw(static_cast<int>(w_detail + 2)) << r.variant.detail << std::right << std::setw(12)
       << r.parameters << std::fixed << std::setprecision(4) << std::setw(9) << r.dice << std::setw(11)
       << r.final_loss << std::setw(12) << std::setprecision(4) << r.variant.paper_reference << '\n';
    os.unsetf(std::ios::floatfield);
  }
  return os.str();
}

}  // namespace yct
