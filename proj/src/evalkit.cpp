#include "chr/evalkit.hpp"

#include <algorithm>
#include <cmath>

#include "chr/errors.hpp"

namespace chr::eval {

std::optional<double> average_precision(std::vector<RankedEntry> entries) {
  std::stable_sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sample_id < b.sample_id;
  });
  std::size_t total_pos = 0;
  for (const auto& e : entries) total_pos += e.positive ? 1 : 0;
  if (total_pos == 0) return std::nullopt;

  const std::size_t n = entries.size();
  std::vector<double> precision(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += entries[i].positive ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (entries[i].positive) ap += precision[i];
  return ap / static_cast<double>(total_pos);
}

std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw DataError("average_precision: scores and labels differ in length");
  std::vector<RankedEntry> entries(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    char id[24];
    std::snprintf(id, sizeof(id), "%020zu", i);
    entries[i] = {id, scores[i], labels[i] != 0};
  }
  return average_precision(std::move(entries));
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  int count = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

nn::MatrixD upscale_bilinear(const nn::MatrixD& map, int height, int width) {
  if (map.rows <= 0 || map.cols <= 0) throw DataError("upscale_bilinear: empty map");
  nn::MatrixD out(height, width);
  const double sy = static_cast<double>(map.rows) / height;
  const double sx = static_cast<double>(map.cols) / width;
  auto axis = [](int dst, double scale, int in, int& i0, int& i1, double& t) {
    double src = (dst + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<int>(std::floor(src));
    i1 = std::min(i0 + 1, in - 1);
    t = src - i0;
  };
  for (int y = 0; y < height; ++y) {
    int y0, y1;
    double ty;
    axis(y, sy, map.rows, y0, y1, ty);
    for (int x = 0; x < width; ++x) {
      int x0, x1;
      double tx;
      axis(x, sx, map.cols, x0, x1, tx);
      const double top = (1.0 - tx) * map(y0, x0) + tx * map(y0, x1);
      const double bottom = (1.0 - tx) * map(y1, x0) + tx * map(y1, x1);
      out(y, x) = (1.0 - ty) * top + ty * bottom;
    }
  }
  return out;
}

PointChoice pointing_argmax(const std::vector<nn::MatrixD>& cams, int height, int width) {
  if (cams.empty()) throw DataError("pointing_argmax: no maps");
  PointChoice best;
  bool found = false;
  for (int l = 0; l < static_cast<int>(cams.size()); ++l) {
    const nn::MatrixD up = upscale_bilinear(cams[static_cast<std::size_t>(l)], height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double v = up(y, x);
        if (!found || v > best.value) {
          best = {l, y, x, v};
          found = true;
        }
      }
  }
  return best;
}

PointingOutcome pointing_localize(const std::vector<nn::MatrixD>& cams, const std::vector<BBox>& boxes, int cls,
                                  int height, int width, PointChoice* choice) {
  const bool any = std::any_of(boxes.begin(), boxes.end(), [&](const BBox& b) { return b.class_id == cls; });
  if (!any) return PointingOutcome::kExcluded;
  const PointChoice p = pointing_argmax(cams, height, width);
  if (choice) *choice = p;
  for (const auto& b : boxes)
    if (b.class_id == cls && b.contains(p.col, p.row)) return PointingOutcome::kHit;
  return PointingOutcome::kMiss;
}

std::optional<double> PointingStats::accuracy() const {
  if (hits + misses == 0) return std::nullopt;
  return static_cast<double>(hits) / (hits + misses);
}

namespace {

void copy_columns(const nn::MatrixD& src, nn::MatrixD& dst, int offset) {
  for (int r = 0; r < src.rows; ++r)
    for (int c = 0; c < src.cols; ++c) dst(r, offset + c) = src(r, c);
}

nlohmann::ordered_json number_or_null(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::vector<RankedEntry> ranking(const nn::MatrixD& scores, int cls, const std::vector<const DatasetItem*>& items) {
  std::vector<RankedEntry> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& y = items[i]->labels;
    if (!y.observed(cls)) continue;
    out.push_back({items[i]->sample_id, scores(cls, static_cast<int>(i)), y.value(cls) == 1});
  }
  return out;
}

Predictions predict(const Model& model, const std::vector<const DatasetItem*>& items, int batch_size) {
  const int n = static_cast<int>(items.size());
  const int classes = model.config().head_config().num_classes;
  Predictions p;
  p.fused = nn::MatrixD(classes, n);
  for (const auto* it : items) p.sample_ids.push_back(it->sample_id);
  for (int first = 0; first < n; first += batch_size) {
    const int count = std::min(batch_size, n - first);
    std::vector<const Image8*> images;
    for (int i = 0; i < count; ++i) images.push_back(&items[static_cast<std::size_t>(first + i)]->image);
    const nn::HeadOutput out = model.infer(images_to_tensor(images));
    if (p.levels.empty()) p.levels.assign(out.scores.size(), nn::MatrixD(classes, n));
    copy_columns(out.fused, p.fused, first);
    for (std::size_t l = 0; l < out.scores.size(); ++l) copy_columns(out.scores[l], p.levels[l], first);
  }
  return p;
}

std::optional<double> mean_ap(const Predictions& p, const std::vector<const DatasetItem*>& items) {
  std::vector<std::optional<double>> aps;
  for (int c = 0; c < p.fused.rows; ++c) aps.push_back(average_precision(ranking(p.fused, c, items)));
  return mean_defined(aps);
}

nlohmann::ordered_json evaluate(const Model& model, const std::vector<const DatasetItem*>& items,
                                const EvalOptions& options) {
  if (items.empty()) throw DataError("evaluate: empty dataset");
  const int classes = kNumProhibited;
  const int n = static_cast<int>(items.size());
  const int height = model.config().backbone.input_height;
  const int width = model.config().backbone.input_width;
  const bool with_boxes = std::any_of(items.begin(), items.end(), [](const DatasetItem* d) { return !d->bboxes.empty(); });
  const bool localize = options.localization && with_boxes;

  Predictions pred;
  pred.fused = nn::MatrixD(classes, n);
  std::vector<PointingStats> pointing(classes);
  for (int first = 0; first < n; first += options.batch_size) {
    const int count = std::min(options.batch_size, n - first);
    std::vector<const Image8*> images;
    for (int i = 0; i < count; ++i) images.push_back(&items[static_cast<std::size_t>(first + i)]->image);
    const nn::HeadOutput out = model.infer(images_to_tensor(images));
    if (pred.levels.empty()) pred.levels.assign(out.scores.size(), nn::MatrixD(classes, n));
    copy_columns(out.fused, pred.fused, first);
    for (std::size_t l = 0; l < out.scores.size(); ++l) copy_columns(out.scores[l], pred.levels[l], first);
    if (!localize) continue;
    for (int i = 0; i < count; ++i) {
      const DatasetItem& item = *items[static_cast<std::size_t>(first + i)];
      for (int c = 0; c < classes; ++c) {
        if (!item.labels.observed(c) || item.labels.value(c) != 1) continue;
        std::vector<nn::MatrixD> cams;
        for (int l = 0; l < out.refined.size(); ++l)
          cams.push_back(model.head().cam(out.refined.levels[static_cast<std::size_t>(l)], i, l, c));
        switch (pointing_localize(cams, item.bboxes, c, height, width)) {
          case PointingOutcome::kHit: ++pointing[c].hits; break;
          case PointingOutcome::kMiss: ++pointing[c].misses; break;
          case PointingOutcome::kExcluded: ++pointing[c].excluded; break;
        }
      }
    }
  }

  nlohmann::ordered_json report;
  auto warnings = nlohmann::ordered_json::array();
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  std::vector<std::optional<double>> aps, accs;
  for (int c = 0; c < classes; ++c) {
    const auto ranked = ranking(pred.fused, c, items);
    const auto ap = average_precision(ranked);
    aps.push_back(ap);
    int num_pos = 0;
    for (const auto& e : ranked) num_pos += e.positive ? 1 : 0;
    if (!ap) warnings.push_back("class " + std::string(kClassNames[c]) + " has no positives; AP undefined and excluded from mAP");
    nlohmann::ordered_json entry;
    entry["ap"] = number_or_null(ap);
    entry["num_positive"] = num_pos;
    if (localize) {
      const auto acc = pointing[c].accuracy();
      accs.push_back(acc);
      entry["pointing"] = {{"accuracy", number_or_null(acc)},
                           {"excluded", pointing[c].excluded},
                           {"hits", pointing[c].hits},
                           {"misses", pointing[c].misses}};
    }
    per_class[std::string(kClassNames[c])] = entry;
  }
  report["classes"] = per_class;
  report["mAP"] = number_or_null(mean_defined(aps));
  if (localize) report["mean_pointing_accuracy"] = number_or_null(mean_defined(accs));
  report["num_samples"] = n;
  auto levels = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < pred.levels.size(); ++l) {
    nlohmann::ordered_json lv;
    lv["level"] = l + 1;
    std::vector<std::optional<double>> laps;
    nlohmann::ordered_json lap = nlohmann::ordered_json::object();
    for (int c = 0; c < classes; ++c) {
      laps.push_back(average_precision(ranking(pred.levels[l], c, items)));
      lap[std::string(kClassNames[c])] = number_or_null(laps.back());
    }
    lv["ap"] = lap;
    lv["mAP"] = number_or_null(mean_defined(laps));
    levels.push_back(lv);
  }
  report["per_level"] = levels;
  report["warnings"] = warnings;
  return report;
}

}  // namespace chr::eval
