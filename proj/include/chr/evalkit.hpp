#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chr/datamodel.hpp"
#include "chr/model.hpp"
#include "chr/tensor.hpp"

namespace chr::eval {

struct RankedEntry {
  std::string sample_id;
  double score = 0.0;
  bool positive = false;
};

/// All-point AP: area under the precision envelope of the ranking by
/// descending score; equal scores are ordered by ascending sample_id.
/// nullopt when no entry is positive.
std::optional<double> average_precision(std::vector<RankedEntry> entries);
/// Convenience form; ties fall back to input order.
std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

/// Entries of class `cls` for every item whose label is observed, in item order.
std::vector<RankedEntry> ranking(const nn::MatrixD& scores, int cls, const std::vector<const DatasetItem*>& items);

/// Mean over the defined entries; nullopt when none is defined.
std::optional<double> mean_defined(const std::vector<std::optional<double>>& values);

/// Bilinear resize with half-pixel centres (edges clamped), in double.
nn::MatrixD upscale_bilinear(const nn::MatrixD& map, int height, int width);

struct PointChoice {
  int level = 0;  // 0-based
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Upscales every level to height x width and returns the global maximum.
/// Ties keep the first position in (level, row, col) order.
PointChoice pointing_argmax(const std::vector<nn::MatrixD>& cams, int height, int width);

enum class PointingOutcome { kHit, kMiss, kExcluded };

/// Hit iff the chosen pixel lies inside a box of class `cls`. Samples without
/// such a box are excluded.
PointingOutcome pointing_localize(const std::vector<nn::MatrixD>& cams, const std::vector<BBox>& boxes, int cls,
                                  int height, int width, PointChoice* choice = nullptr);

struct PointingStats {
  int hits = 0;
  int misses = 0;
  int excluded = 0;
  std::optional<double> accuracy() const;
};

/// Fused and per-level probabilities for every item, in dataset order.
struct Predictions {
  std::vector<std::string> sample_ids;
  nn::MatrixD fused;                 // classes x N
  std::vector<nn::MatrixD> levels;   // per head level, classes x N
};

Predictions predict(const Model& model, const std::vector<const DatasetItem*>& items, int batch_size = 64);

struct EvalOptions {
  int batch_size = 64;
  bool localization = true;  // still omitted when the data has no boxes
};

/// JSON report: per-class AP and pointing accuracy, their means, per-level
/// AP diagnostics and warnings. Identical inputs give identical bytes.
nlohmann::ordered_json evaluate(const Model& model, const std::vector<const DatasetItem*>& items,
                                const EvalOptions& options = {});

/// Test mAP over the fused scores only (no localization); nullopt when no class has positives.
std::optional<double> mean_ap(const Predictions& p, const std::vector<const DatasetItem*>& items);

}  // namespace chr::eval
