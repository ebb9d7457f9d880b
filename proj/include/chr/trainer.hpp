#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "chr/checkpoint.hpp"
#include "chr/config.hpp"
#include "chr/datamodel.hpp"
#include "chr/model.hpp"
#include "chr/optimizer.hpp"

namespace chr {

using DatasetView = std::vector<const DatasetItem*>;

DatasetView view_of(const Dataset& data);
/// Items whose manifest split equals `split`.
DatasetView view_of(const Dataset& data, const DatasetManifest& manifest, const std::string& split);

enum class LrSchedule { kCosine, kConstant };

struct TrainConfig {
  ModelConfig model;
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.01;
  OptimizerConfig optimizer;
  LrSchedule schedule = LrSchedule::kCosine;
  std::uint64_t seed = 1;
  double epsilon = 0.3;
  int eval_interval = 1;  // epochs between validation passes; 0 = final epoch only
  /// Balanced variants train with ungated loss for this many leading epochs.
  int warmup_epochs = 0;

  loss::LossKind loss_kind() const { return variant_traits(model.variant).loss; }
  /// Loss actually applied during the given zero-based epoch.
  loss::LossKind loss_kind_at(std::int64_t epoch) const {
    return epoch < warmup_epochs ? loss::LossKind::kPlain : loss_kind();
  }

  void validate() const;
  FlatConfig to_flat() const;
  /// Unknown keys are rejected. A "loss.kind" key must agree with the variant.
  static TrainConfig from_flat(const FlatConfig& flat);
  /// Hash of the canonical flat form.
  std::string hash() const;
};

struct MetricRecord {
  std::int64_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};
std::string to_json_line(const MetricRecord& r);

struct StepResult {
  double loss = 0.0;
  /// Share of negative (level, class) entries left on by the gates.
  double active_negative_fraction = 0.0;
};

/// Owns the model and optimizer state of one training run.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  Model& model() { return model_; }
  const Model& model() const { return model_; }
  std::int64_t epoch() const { return epoch_; }
  std::int64_t step() const { return optimizer_.steps(); }

  /// One forward and one backward pass over `batch`, then one update at `lr`.
  /// Throws NumericalError with batch ids and score statistics if the loss is not finite.
  StepResult train_step(const DatasetView& batch, double lr);
  /// Loss of `batch` in training mode without updating anything but normalization statistics.
  double batch_loss(const DatasetView& batch);

  /// Learning rate for the given global step of a run with `total_steps`.
  double lr_at(std::int64_t step, std::int64_t total_steps) const;
  std::int64_t steps_per_epoch(std::size_t train_size) const;

  /// Trains one epoch (shuffled deterministically from seed and epoch); returns the mean loss.
  double run_epoch(const DatasetView& train);

  /// Model parameters, normalization buffers and optimizer state.
  std::vector<nn::Param*> state();
  void save(const std::filesystem::path& path);
  /// Throws ConfigError if the checkpoint was written under another config.
  void restore(const Checkpoint& ckpt);

 private:
  TrainConfig config_;
  Model model_;
  Optimizer optimizer_;
  std::int64_t epoch_ = 0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;  // written after every epoch
  /// Stop once this many epochs are complete (for interrupted-run tests).
  std::optional<int> stop_after_epoch;
  std::function<void(const MetricRecord&)> on_metric;
};

struct TrainSummary {
  std::vector<MetricRecord> metrics;
  std::optional<double> final_val_map;
};

/// Runs the remaining epochs of `trainer`. Refuses to start when `train`
/// holds no positive sample.
TrainSummary train(Trainer& trainer, const DatasetView& train, const DatasetView& val, const TrainOptions& options = {});

}  // namespace chr
