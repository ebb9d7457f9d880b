#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chr/datamodel.hpp"
#include "chr/model.hpp"
#include "chr/synthgen.hpp"
#include "chr/trainer.hpp"

namespace chr {

struct AblationSpec {
  std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
  std::vector<std::size_t> ratios{10};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t positive_count = 500;
  double train_fraction = 0.8;
  /// Variant and seed are overridden per run.
  TrainConfig base;
  /// Per-ratio epoch counts; ratios not listed use base.epochs.
  std::map<std::size_t, int> epochs_by_ratio;
  bool localization = true;
  /// When set, each run's metrics go to <run_dir>/<variant>_r<ratio>_s<seed>.jsonl.
  std::optional<std::filesystem::path> run_dir;

  int epochs_for(std::size_t ratio) const;
  std::size_t run_count() const { return variants.size() * ratios.size() * seeds.size(); }
};

/// Desk-scale comparison: 500 positives at ratios 10 and 100, three seeds,
/// Adam at 3e-3 with batch 16, six epochs of which the first three use the
/// ungated loss, head width 32.
AblationSpec desk_spec();
/// Pool for desk_spec: 500 positives and enough negatives for ratio 100.
synth::GenerateOptions desk_pool_options();

struct AblationCell {
  Variant variant = Variant::kCHR;
  std::size_t ratio = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::optional<double> map;
  std::optional<double> pointing;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;

  const AblationCell* find(Variant v, std::size_t ratio, std::uint64_t seed) const;
};

/// One line per planned run, in execution order.
std::vector<std::string> ablation_plan(const AblationSpec& spec);

/// Every (ratio, seed) draws its subset from `pool` once; all variants of
/// that pair train and test on the same subset. A failing run is recorded
/// and the rest proceed.
AblationResult run_ablation(const AblationSpec& spec, const Dataset& pool,
                            const std::function<void(const AblationCell&)>& on_cell = {});

/// Manifest mirroring an in-memory dataset (split "pool", no image paths).
DatasetManifest manifest_of(const Dataset& data);

/// Rows = variants; per ratio, mAP and pointing accuracy as mean ± sample std.
std::string ablation_markdown(const AblationSpec& spec, const AblationResult& result);
/// Raw cells plus the summary; no timing, so identical runs give identical bytes.
nlohmann::ordered_json ablation_json(const AblationSpec& spec, const AblationResult& result);
std::string ablation_timing_csv(const AblationResult& result);

}  // namespace chr
