#include "chr/ablation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "chr/errors.hpp"
#include "chr/evalkit.hpp"
#include "chr/synthgen.hpp"

namespace chr {

namespace {

struct MeanSpread {
  std::optional<double> mean;
  double spread = 0.0;
  int count = 0;
};

MeanSpread summarize(const std::vector<double>& v) {
  MeanSpread s;
  s.count = static_cast<int>(v.size());
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  const double m = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - m) * (x - m);
  s.mean = m;
  s.spread = v.size() > 1 ? std::sqrt(sq / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

std::string run_name(Variant v, std::size_t ratio, std::uint64_t seed) {
  return std::string(variant_name(v)) + "_r" + std::to_string(ratio) + "_s" + std::to_string(seed);
}

std::string cell_text(const MeanSpread& s) {
  if (!s.mean) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", 100.0 * *s.mean, 100.0 * s.spread);
  return buf;
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

template <typename Field>
MeanSpread collect(const AblationResult& r, Variant v, std::size_t ratio, Field field) {
  std::vector<double> vals;
  for (const auto& c : r.cells)
    if (c.variant == v && c.ratio == ratio && c.ok && (c.*field)) vals.push_back(*(c.*field));
  return summarize(vals);
}

}  // namespace

int AblationSpec::epochs_for(std::size_t ratio) const {
  auto it = epochs_by_ratio.find(ratio);
  return it == epochs_by_ratio.end() ? base.epochs : it->second;
}

AblationSpec desk_spec() {
  AblationSpec s;
  s.ratios = {10, 100};
  s.seeds = {1, 2, 3};
  s.positive_count = 500;
  s.base.epochs = 6;
  s.base.warmup_epochs = 3;
  s.base.batch_size = 16;
  s.base.lr = 3e-3;
  s.base.optimizer.kind = OptimizerKind::kAdaptive;
  s.base.model.head_width = 32;
  return s;
}

synth::GenerateOptions desk_pool_options() {
  synth::GenerateOptions g;
  g.n_pos = 500;
  g.n_neg = 50000;
  g.seed = 7;
  return g;
}

const AblationCell* AblationResult::find(Variant v, std::size_t ratio, std::uint64_t seed) const {
  for (const auto& c : cells)
    if (c.variant == v && c.ratio == ratio && c.seed == seed) return &c;
  return nullptr;
}

std::vector<std::string> ablation_plan(const AblationSpec& spec) {
  std::vector<std::string> out;
  for (std::size_t ratio : spec.ratios)
    for (std::uint64_t seed : spec.seeds)
      for (Variant v : spec.variants)
        out.push_back("train " + std::string(variant_name(v)) + " ratio=" + std::to_string(ratio) +
                      " seed=" + std::to_string(seed) + " positives=" + std::to_string(spec.positive_count) +
                      " epochs=" + std::to_string(spec.epochs_for(ratio)));
  return out;
}

DatasetManifest manifest_of(const Dataset& data) {
  DatasetManifest m;
  for (const auto& d : data) m.entries.push_back({d.sample_id, "", d.labels, d.bboxes, "pool"});
  return m;
}

AblationResult run_ablation(const AblationSpec& spec, const Dataset& pool,
                            const std::function<void(const AblationCell&)>& on_cell) {
  const DatasetManifest pool_manifest = manifest_of(pool);
  std::unordered_map<std::string, const DatasetItem*> by_id;
  for (const auto& d : pool) by_id[d.sample_id] = &d;
  if (spec.run_dir) std::filesystem::create_directories(*spec.run_dir);

  AblationResult result;
  for (std::size_t ratio : spec.ratios) {
    for (std::uint64_t seed : spec.seeds) {
      DatasetView train_view, test_view;
      std::string subset_error;
      try {
        synth::SubsetSpec ss;
        ss.ratio = ratio;
        ss.positive_count = spec.positive_count;
        ss.seed = seed;
        ss.train_fraction = spec.train_fraction;
        const auto [train_m, test_m] = synth::build_subsets(pool_manifest, ss);
        for (const auto& e : train_m.entries) train_view.push_back(by_id.at(e.sample_id));
        for (const auto& e : test_m.entries) test_view.push_back(by_id.at(e.sample_id));
      } catch (const Error& e) {
        subset_error = e.what();
      }
      for (Variant v : spec.variants) {
        AblationCell cell;
        cell.variant = v;
        cell.ratio = ratio;
        cell.seed = seed;
        if (!subset_error.empty()) {
          cell.error = subset_error;
        } else {
          try {
            TrainConfig cfg = spec.base;
            cfg.model.variant = v;
            cfg.seed = seed;
            cfg.epochs = spec.epochs_for(ratio);
            cfg.eval_interval = 0;
            Trainer trainer(cfg);
            std::ofstream log;
            TrainOptions opts;
            if (spec.run_dir) {
              log.open(*spec.run_dir / (run_name(v, ratio, seed) + ".jsonl"));
              opts.on_metric = [&log](const MetricRecord& r) { log << to_json_line(r) << '\n'; };
            }
            const auto t0 = std::chrono::steady_clock::now();
            train(trainer, train_view, {}, opts);
            const auto t1 = std::chrono::steady_clock::now();
            eval::EvalOptions eo;
            eo.localization = spec.localization;
            const auto report = eval::evaluate(trainer.model(), test_view, eo);
            const auto t2 = std::chrono::steady_clock::now();
            if (report["mAP"].is_number()) cell.map = report["mAP"].get<double>();
            if (report.contains("mean_pointing_accuracy") && report["mean_pointing_accuracy"].is_number())
              cell.pointing = report["mean_pointing_accuracy"].get<double>();
            if (log.is_open()) {
              log << to_json_line({cfg.epochs, "test", "mAP", cell.map.value_or(NAN)}) << '\n';
              if (cell.pointing) log << to_json_line({cfg.epochs, "test", "pointing_accuracy", *cell.pointing}) << '\n';
            }
            cell.train_seconds = std::chrono::duration<double>(t1 - t0).count();
            cell.eval_seconds = std::chrono::duration<double>(t2 - t1).count();
            cell.ok = true;
          } catch (const Error& e) {
            cell.error = e.what();
          }
        }
        if (on_cell) on_cell(cell);
        result.cells.push_back(std::move(cell));
      }
    }
  }
  return result;
}

std::string ablation_markdown(const AblationSpec& spec, const AblationResult& result) {
  std::string head = "| variant |";
  std::string rule = "|---|";
  for (std::size_t r : spec.ratios) {
    head += " mAP r" + std::to_string(r) + " | pointing r" + std::to_string(r) + " |";
    rule += "---|---|";
  }
  std::string out = head + "\n" + rule + "\n";
  for (Variant v : spec.variants) {
    out += "| " + std::string(variant_name(v)) + " |";
    for (std::size_t r : spec.ratios) {
      const auto m = collect(result, v, r, &AblationCell::map);
      const auto p = collect(result, v, r, &AblationCell::pointing);
      std::size_t failed = 0;
      for (const auto& c : result.cells)
        if (c.variant == v && c.ratio == r && !c.ok) ++failed;
      const std::string mark = failed ? " (" + std::to_string(failed) + " failed)" : "";
      out += " " + cell_text(m) + mark + " | " + cell_text(p) + " |";
    }
    out += "\n";
  }
  out += "\nRaw runs:\n\n| variant | ratio | seed | status | mAP | pointing |\n|---|---|---|---|---|---|\n";
  for (const auto& c : result.cells) {
    char m[32] = "n/a", p[32] = "n/a";
    if (c.map) std::snprintf(m, sizeof(m), "%.4f", *c.map);
    if (c.pointing) std::snprintf(p, sizeof(p), "%.4f", *c.pointing);
    out += "| " + std::string(variant_name(c.variant)) + " | " + std::to_string(c.ratio) + " | " + std::to_string(c.seed) +
           " | " + (c.ok ? "ok" : "failed: " + c.error) + " | " + m + " | " + p + " |\n";
  }
  return out;
}

nlohmann::ordered_json ablation_json(const AblationSpec& spec, const AblationResult& result) {
  nlohmann::ordered_json j;
  auto runs = nlohmann::ordered_json::array();
  for (const auto& c : result.cells) {
    nlohmann::ordered_json r;
    r["variant"] = variant_name(c.variant);
    r["ratio"] = c.ratio;
    r["seed"] = c.seed;
    r["status"] = c.ok ? "ok" : "failed";
    if (!c.ok) r["error"] = c.error;
    r["mAP"] = opt_json(c.map);
    r["pointing_accuracy"] = opt_json(c.pointing);
    runs.push_back(r);
  }
  j["runs"] = runs;
  auto summary = nlohmann::ordered_json::array();
  for (Variant v : spec.variants)
    for (std::size_t r : spec.ratios) {
      const auto m = collect(result, v, r, &AblationCell::map);
      const auto p = collect(result, v, r, &AblationCell::pointing);
      summary.push_back({{"variant", variant_name(v)},
                         {"ratio", r},
                         {"runs", m.count},
                         {"mAP_mean", opt_json(m.mean)},
                         {"mAP_spread", m.spread},
                         {"pointing_mean", opt_json(p.mean)},
                         {"pointing_spread", p.spread}});
    }
  j["summary"] = summary;
  return j;
}

std::string ablation_timing_csv(const AblationResult& result) {
  std::string out = "variant,ratio,seed,train_seconds,eval_seconds\n";
  for (const auto& c : result.cells) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f,%.3f", c.train_seconds, c.eval_seconds);
    out += std::string(variant_name(c.variant)) + "," + std::to_string(c.ratio) + "," + std::to_string(c.seed) + "," + buf + "\n";
  }
  return out;
}

}  // namespace chr
