#include <malloc.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chr/ablation.hpp"
#include "chr/checkpoint.hpp"
#include "chr/config.hpp"
#include "chr/errors.hpp"
#include "chr/evalkit.hpp"
#include "chr/ingest.hpp"
#include "chr/plot.hpp"
#include "chr/synthgen.hpp"
#include "chr/trainer.hpp"

namespace fs = std::filesystem;
using namespace chr;

namespace {

// Without --resume, refuses when any of `outputs` already exists. A missing
// directory is created under a temporary name and renamed into place.
void prepare_out_dir(const fs::path& dir, bool resume, const std::vector<std::string>& outputs) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("--out-dir " + dir.string() + " is not a directory");
    if (resume) return;
    for (const auto& name : outputs)
      if (fs::exists(dir / name))
        throw ConfigError(dir.string() + "/" + name + " already exists; pass --resume or choose another --out-dir");
    return;
  }
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const fs::path staging = parent / ("." + dir.filename().string() + ".tmp" + std::to_string(::getpid()));
  fs::create_directory(staging);
  std::error_code ec;
  fs::rename(staging, dir, ec);
  if (ec) {
    fs::remove(staging);
    if (!fs::is_directory(dir)) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

nlohmann::ordered_json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

Dataset load_manifest_data(const fs::path& path) {
  const DatasetManifest m = read_manifest(path);
  verify_images_exist(m);
  return load_dataset(m);
}

// Model configuration stored in a checkpoint; with `config_path`, the file
// must describe the same run.
TrainConfig checkpoint_config(const Checkpoint& ckpt, const std::string& config_path) {
  TrainConfig cfg = TrainConfig::from_flat(ckpt.meta.config);
  if (cfg.hash() != ckpt.meta.config_hash) throw DataError("checkpoint config hash does not match its own config");
  if (!config_path.empty()) {
    const TrainConfig other = TrainConfig::from_flat(read_flat_config(config_path));
    if (other.hash() != ckpt.meta.config_hash)
      throw ConfigError("checkpoint was trained with config " + ckpt.meta.config_hash + ", " + config_path +
                        " hashes to " + other.hash());
  }
  return cfg;
}

struct GenerateArgs {
  std::size_t n_pos = 500;
  std::size_t n_neg = 0;
  std::size_t ratio = 0;
  std::uint64_t seed = 1;
  int canvas = 96;
  std::string mode = "additive";
  double train_fraction = 0.8;
  std::string out_dir;
  bool resume = false;
};

void run_generate(const GenerateArgs& a) {
  synth::GenerateOptions g;
  g.n_pos = a.n_pos;
  g.n_neg = a.n_neg ? a.n_neg : a.ratio * a.n_pos;
  g.seed = a.seed;
  g.canvas = a.canvas;
  g.mode = synth::parse_mode(a.mode);
  std::vector<std::string> outputs{"manifest.jsonl", "images"};
  if (a.ratio) outputs.insert(outputs.end(), {"train.jsonl", "test.jsonl"});
  prepare_out_dir(a.out_dir, a.resume, outputs);
  const DatasetManifest pool = synth::generate_dataset(synth::GlyphLibrary::standard(), g, a.out_dir);
  std::printf("wrote %zu samples (%zu positive) to %s\n", pool.entries.size(), g.n_pos, a.out_dir.c_str());
  if (!a.ratio) return;
  synth::SubsetSpec s;
  s.ratio = a.ratio;
  s.positive_count = a.n_pos;
  s.seed = a.seed;
  s.train_fraction = a.train_fraction;
  const auto [train, test] = synth::build_subsets(pool, s);
  write_manifest(fs::path(a.out_dir) / "train.jsonl", train);
  write_manifest(fs::path(a.out_dir) / "test.jsonl", test);
  std::printf("subset r=%zu: %zu train, %zu test\n", a.ratio, train.entries.size(), test.entries.size());
}

struct IngestArgs {
  std::string images, labels, bboxes, ext = ".png", out_dir;
  bool resume = false;
};

void run_ingest(const IngestArgs& a) {
  IngestConfig c;
  c.image_dir = a.images;
  c.label_csv = a.labels;
  if (!a.bboxes.empty()) c.bbox_csv = a.bboxes;
  c.image_extension = a.ext;
  c.validate();
  prepare_out_dir(a.out_dir, a.resume, {"manifest.jsonl", "skipped.txt"});
  IngestResult r = ingest(c);
  // Image paths are stored absolute so the manifest works from the output directory.
  for (auto& e : r.manifest.entries)
    if (fs::path(e.image).is_relative()) e.image = fs::absolute(r.manifest.base_dir / e.image).string();
  write_manifest(fs::path(a.out_dir) / "manifest.jsonl", r.manifest);
  std::string skipped;
  for (const auto& id : r.skipped) skipped += id + "\n";
  write_text(fs::path(a.out_dir) / "skipped.txt", skipped);
  std::printf("ingested %zu samples, skipped %zu without an image\n", r.manifest.entries.size(), r.skipped.size());
}

struct TrainArgs {
  std::string config, variant, train, val, out_dir;
  std::uint64_t seed = 0;
  int epochs = -1;
  bool resume = false;
};

void run_train(const TrainArgs& a) {
  FlatConfig flat = a.config.empty() ? FlatConfig{} : read_flat_config(a.config);
  if (!a.variant.empty()) {
    flat["variant"] = a.variant;
    flat.erase("loss.kind");
  }
  if (a.seed) flat["seed"] = std::to_string(a.seed);
  if (a.epochs >= 0) flat["epochs"] = std::to_string(a.epochs);
  const TrainConfig cfg = TrainConfig::from_flat(flat);

  const std::string stem = std::string(variant_name(cfg.model.variant)) + "_s" + std::to_string(cfg.seed);
  const std::string ckpt_name = stem + ".ckpt", metrics_name = stem + ".metrics.jsonl", config_name = stem + ".config";
  prepare_out_dir(a.out_dir, a.resume, {ckpt_name, metrics_name, config_name});
  const fs::path dir = a.out_dir;

  const Dataset train_data = load_manifest_data(a.train);
  const Dataset val_data = a.val.empty() ? Dataset{} : load_manifest_data(a.val);

  Trainer trainer(cfg);
  std::vector<std::string> kept;
  if (a.resume && fs::exists(dir / ckpt_name)) {
    trainer.restore(load_checkpoint(dir / ckpt_name));
    // Drop metric lines written after the checkpoint being resumed.
    std::ifstream in(dir / metrics_name);
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      if (nlohmann::json::parse(line).at("epoch").get<std::int64_t>() <= trainer.epoch()) kept.push_back(line);
    }
    std::printf("resuming %s at epoch %lld\n", stem.c_str(), static_cast<long long>(trainer.epoch()));
  }
  write_text(dir / config_name, to_text(cfg.to_flat()));
  std::string log;
  for (const auto& l : kept) log += l + "\n";
  write_text(dir / metrics_name, log);

  std::ofstream metrics(dir / metrics_name, std::ios::app);
  TrainOptions opts;
  opts.checkpoint_path = dir / ckpt_name;
  opts.on_metric = [&](const MetricRecord& r) {
    metrics << to_json_line(r) << "\n";
    metrics.flush();
    std::printf("epoch %lld %s %s %.6f\n", static_cast<long long>(r.epoch), r.split.c_str(), r.metric.c_str(), r.value);
    std::fflush(stdout);
  };
  const TrainSummary s = train(trainer, view_of(train_data), view_of(val_data), opts);
  if (s.final_val_map) std::printf("final val mAP %.4f\n", *s.final_val_map);
  std::printf("checkpoint %s\n", (dir / ckpt_name).c_str());
}

struct EvaluateArgs {
  std::string checkpoint, config, data, out_dir, name = "report.json";
  bool resume = false;
  bool no_localization = false;
};

void run_evaluate(const EvaluateArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const TrainConfig cfg = checkpoint_config(ckpt, a.config);
  prepare_out_dir(a.out_dir, a.resume, {a.name});
  Model model(cfg.model);
  restore_tensors(ckpt, model.state());
  const Dataset data = load_manifest_data(a.data);
  eval::EvalOptions opts;
  opts.localization = !a.no_localization;
  const auto report = eval::evaluate(model, view_of(data), opts);
  write_text(fs::path(a.out_dir) / a.name, report.dump(2) + "\n");
  std::printf("mAP %s\n", report["mAP"].dump().c_str());
  if (report.contains("mean_pointing_accuracy"))
    std::printf("mean pointing accuracy %s\n", report["mean_pointing_accuracy"].dump().c_str());
  for (const auto& w : report["warnings"]) std::fprintf(stderr, "warning: %s\n", w.get<std::string>().c_str());
}

struct AblateArgs {
  std::string config, pool, out_dir, variants, ratios, seeds, epochs_by_ratio;
  std::size_t positives = 0;
  std::uint64_t pool_seed = 0;
  bool dry_run = false;
  bool resume = false;
};

AblationSpec ablation_spec(const AblateArgs& a) {
  AblationSpec s = desk_spec();
  if (!a.config.empty()) {
    FlatConfig flat = s.base.to_flat();
    flat.erase("loss.kind");
    for (const auto& [k, v] : read_flat_config(a.config)) flat[k] = v;
    s.base = TrainConfig::from_flat(flat);
  }
  if (!a.variants.empty()) {
    s.variants.clear();
    for (const auto& v : split_list(a.variants)) s.variants.push_back(parse_variant(v));
  }
  auto parse_u64 = [](const std::string& v, const char* what) {
    try {
      std::size_t used = 0;
      const auto x = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " entry: " + v);
    }
  };
  if (!a.ratios.empty()) {
    s.ratios.clear();
    for (const auto& r : split_list(a.ratios)) s.ratios.push_back(parse_u64(r, "--ratios"));
  }
  if (!a.seeds.empty()) {
    s.seeds.clear();
    for (const auto& r : split_list(a.seeds)) s.seeds.push_back(parse_u64(r, "--seeds"));
  }
  for (const auto& pair : split_list(a.epochs_by_ratio)) {
    const auto colon = pair.find(':');
    if (colon == std::string::npos) throw ConfigError("--epochs-by-ratio expects ratio:epochs, got " + pair);
    s.epochs_by_ratio[parse_u64(pair.substr(0, colon), "--epochs-by-ratio")] =
        static_cast<int>(parse_u64(pair.substr(colon + 1), "--epochs-by-ratio"));
  }
  if (a.positives) s.positive_count = a.positives;
  if (s.variants.empty() || s.ratios.empty() || s.seeds.empty()) throw ConfigError("ablation needs variants, ratios and seeds");
  s.base.validate();
  return s;
}

void run_ablate(const AblateArgs& a) {
  AblationSpec spec = ablation_spec(a);
  if (a.dry_run) {
    for (const auto& line : ablation_plan(spec)) std::printf("%s\n", line.c_str());
    std::printf("%zu runs\n", spec.run_count());
    return;
  }
  prepare_out_dir(a.out_dir, a.resume, {"table.md", "ablation.json", "timing.csv", "runs"});
  spec.run_dir = fs::path(a.out_dir) / "runs";
  fs::create_directories(*spec.run_dir);

  Dataset pool;
  if (!a.pool.empty()) {
    pool = load_manifest_data(a.pool);
  } else {
    synth::GenerateOptions g = desk_pool_options();
    g.n_pos = spec.positive_count;
    g.n_neg = spec.positive_count * *std::max_element(spec.ratios.begin(), spec.ratios.end());
    if (a.pool_seed) g.seed = a.pool_seed;
    std::printf("generating synthetic pool: %zu positive, %zu negative, seed %llu\n", g.n_pos, g.n_neg,
                static_cast<unsigned long long>(g.seed));
    std::fflush(stdout);
    pool = synth::generate_in_memory(synth::GlyphLibrary::standard(), g);
  }
  const AblationResult result = run_ablation(spec, pool, [](const AblationCell& c) {
    if (c.ok)
      std::printf("%s r%zu s%llu mAP %.4f pointing %s (%.0f s)\n", std::string(variant_name(c.variant)).c_str(), c.ratio,
                  static_cast<unsigned long long>(c.seed), c.map.value_or(0.0),
                  c.pointing ? fmt4(*c.pointing).c_str() : "n/a", c.train_seconds + c.eval_seconds);
    else
      std::printf("%s r%zu s%llu FAILED: %s\n", std::string(variant_name(c.variant)).c_str(), c.ratio,
                  static_cast<unsigned long long>(c.seed), c.error.c_str());
    std::fflush(stdout);
  });
  const fs::path dir = a.out_dir;
  const std::string table = ablation_markdown(spec, result);
  write_text(dir / "table.md", table);
  write_text(dir / "ablation.json", ablation_json(spec, result).dump(2) + "\n");
  write_text(dir / "timing.csv", ablation_timing_csv(result));
  std::printf("\n%s", table.c_str());
}

struct ReportArgs {
  std::string checkpoint, config, data, ablation, out_dir;
  int overlays = 8;
  bool resume = false;
};

void run_report(const ReportArgs& a) {
  if (a.checkpoint.empty() && a.ablation.empty()) throw ConfigError("report needs --checkpoint/--data or --ablation");
  if (!a.checkpoint.empty() && a.data.empty()) throw ConfigError("--checkpoint requires --data");
  std::vector<std::string> outputs;
  if (!a.checkpoint.empty()) outputs.insert(outputs.end(), {"pr_curves.png", "pr_curves.json", "cams"});
  if (!a.ablation.empty()) outputs.push_back("gain_vs_ratio.png");
  prepare_out_dir(a.out_dir, a.resume, outputs);
  const fs::path dir = a.out_dir;

  if (!a.checkpoint.empty()) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const TrainConfig cfg = checkpoint_config(ckpt, a.config);
    Model model(cfg.model);
    restore_tensors(ckpt, model.state());
    const Dataset data = load_manifest_data(a.data);
    const auto items = view_of(data);
    const eval::Predictions pred = eval::predict(model, items);

    std::vector<std::vector<plot::PrPoint>> curves;
    nlohmann::ordered_json pr;
    for (int c = 0; c < kNumProhibited; ++c) {
      curves.push_back(plot::precision_recall(eval::ranking(pred.fused, c, items)));
      auto pts = nlohmann::ordered_json::array();
      for (const auto& p : curves.back()) pts.push_back({p.recall, p.precision});
      pr[std::string(kClassNames[c])] = pts;
    }
    write_png(dir / "pr_curves.png", plot::pr_chart(curves));
    write_text(dir / "pr_curves.json", pr.dump() + "\n");

    fs::create_directories(dir / "cams");
    int written = 0;
    for (const auto* item : items) {
      if (written >= a.overlays) break;
      for (int c = 0; c < kNumProhibited && written < a.overlays; ++c) {
        if (!item->labels.observed(c) || item->labels.value(c) != 1) continue;
        const auto cams = plot::class_cams(model, *item, c);
        write_png(dir / "cams" / (item->sample_id + "_" + std::string(kClassNames[c]) + ".png"),
                  plot::cam_overlay(item->image, cams, c, item->bboxes));
        ++written;
      }
    }
    std::printf("wrote pr_curves.png and %d CAM overlays\n", written);
  }

  if (!a.ablation.empty()) {
    const auto j = read_json(a.ablation);
    std::map<std::size_t, std::pair<std::optional<double>, std::optional<double>>> by_ratio;  // baseline, CHR
    for (const auto& row : j.at("summary")) {
      if (row.at("mAP_mean").is_null()) continue;
      const std::string v = row.at("variant");
      auto& slot = by_ratio[row.at("ratio").get<std::size_t>()];
      if (v == "baseline") slot.first = row.at("mAP_mean").get<double>();
      if (v == "CHR") slot.second = row.at("mAP_mean").get<double>();
    }
    std::vector<plot::GainPoint> gains;
    for (const auto& [r, ms] : by_ratio)
      if (ms.first && ms.second) {
        gains.push_back({static_cast<double>(r), *ms.second - *ms.first});
        std::printf("ratio %zu: CHR - baseline = %+.4f mAP\n", r, gains.back().gain);
      }
    if (gains.empty()) throw DataError(a.ablation + " has no ratio with both baseline and CHR results");
    write_png(dir / "gain_vs_ratio.png", plot::gain_chart(gains));
  }
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates and frees the same large buffers every step; keep them
  // on the heap instead of round-tripping through mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Multi-label recognition with hierarchical refinement and a class-balanced loss"};
  app.require_subcommand(1);

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Render a synthetic dataset (and optionally an imbalanced subset)");
  gen->add_option("--n-pos", ga.n_pos, "Positive samples")->capture_default_str();
  gen->add_option("--n-neg", ga.n_neg, "Negative samples (default ratio * n-pos)");
  gen->add_option("--ratio", ga.ratio, "Also write train/test manifests with this negative:positive ratio");
  gen->add_option("--train-fraction", ga.train_fraction, "Train share of each stratum")->capture_default_str();
  gen->add_option("--seed", ga.seed, "Generator seed")->capture_default_str();
  gen->add_option("--canvas", ga.canvas, "Image side in pixels")->capture_default_str();
  gen->add_option("--mode", ga.mode, "additive or attenuation")->capture_default_str();
  gen->add_option("--out-dir", ga.out_dir, "Output directory")->required();
  gen->add_flag("--resume", ga.resume, "Allow writing into an existing output");

  IngestArgs ia;
  auto* ing = app.add_subcommand("ingest", "Build a manifest from an image folder and CSV annotations");
  ing->add_option("--images", ia.images, "Image directory")->required();
  ing->add_option("--labels", ia.labels, "Label CSV: sample_id,<class>,...")->required();
  ing->add_option("--bboxes", ia.bboxes, "Box CSV: sample_id,x_min,y_min,x_max,y_max,class");
  ing->add_option("--ext", ia.ext, "Image file extension")->capture_default_str();
  ing->add_option("--out-dir", ia.out_dir, "Output directory")->required();
  ing->add_flag("--resume", ia.resume, "Allow writing into an existing output");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train one variant");
  tr->add_option("--config", ta.config, "Flat key=value config file");
  tr->add_option("--variant", ta.variant, "baseline, H, HR, CH or CHR (overrides the config)");
  tr->add_option("--seed", ta.seed, "Seed (overrides the config)");
  tr->add_option("--epochs", ta.epochs, "Epochs (overrides the config)");
  tr->add_option("--train", ta.train, "Training manifest")->required();
  tr->add_option("--val", ta.val, "Validation manifest");
  tr->add_option("--out-dir", ta.out_dir, "Output directory")->required();
  tr->add_flag("--resume", ta.resume, "Continue from the checkpoint in --out-dir");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a manifest and write a JSON report");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  ev->add_option("--config", ea.config, "Config the checkpoint must have been trained with");
  ev->add_option("--data", ea.data, "Test manifest")->required();
  ev->add_option("--out-dir", ea.out_dir, "Output directory")->required();
  ev->add_option("--name", ea.name, "Report file name")->capture_default_str();
  ev->add_flag("--no-localization", ea.no_localization, "Skip pointing localization");
  ev->add_flag("--resume", ea.resume, "Allow overwriting the report");

  AblateArgs aa;
  auto* ab = app.add_subcommand("ablate", "Train and compare variants across ratios and seeds");
  ab->add_option("--config", aa.config, "Config keys overriding the desk defaults");
  ab->add_option("--pool", aa.pool, "Pool manifest (default: synthetic pool generated in memory)");
  ab->add_option("--pool-seed", aa.pool_seed, "Seed of the generated pool");
  ab->add_option("--variants", aa.variants, "Comma-separated variants (default all five)");
  ab->add_option("--ratios", aa.ratios, "Comma-separated ratios (default 10,100)");
  ab->add_option("--seeds", aa.seeds, "Comma-separated seeds (default 1,2,3)");
  ab->add_option("--positives", aa.positives, "Positives per subset (default 500)");
  ab->add_option("--epochs-by-ratio", aa.epochs_by_ratio, "Per-ratio epochs, e.g. 10:8,100:6");
  ab->add_option("--out-dir", aa.out_dir, "Output directory");
  ab->add_flag("--dry-run", aa.dry_run, "Print the run plan and exit");
  ab->add_flag("--resume", aa.resume, "Allow overwriting existing results");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Plots: PR curves, CAM overlays, gain against ratio");
  rep->add_option("--checkpoint", ra.checkpoint, "Checkpoint file");
  rep->add_option("--config", ra.config, "Config the checkpoint must have been trained with");
  rep->add_option("--data", ra.data, "Manifest to plot");
  rep->add_option("--ablation", ra.ablation, "ablation.json from the ablate command");
  rep->add_option("--overlays", ra.overlays, "Number of CAM overlays")->capture_default_str();
  rep->add_option("--out-dir", ra.out_dir, "Output directory")->required();
  rep->add_flag("--resume", ra.resume, "Allow overwriting existing plots");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*gen) run_generate(ga);
    else if (*ing) run_ingest(ia);
    else if (*tr) run_train(ta);
    else if (*ev) run_evaluate(ea);
    else if (*ab) {
      if (!aa.dry_run && aa.out_dir.empty()) throw ConfigError("ablate needs --out-dir unless --dry-run");
      run_ablate(aa);
    } else if (*rep) run_report(ra);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kData);
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}
