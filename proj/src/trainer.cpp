#include "chr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "chr/errors.hpp"
#include "chr/evalkit.hpp"
#include "chr/rng.hpp"

namespace chr {

namespace {

constexpr std::uint64_t kEpochStream = 0x65706f6368;  // "epoch"

const std::set<std::string> kKnownKeys = {
    "variant",         "epochs",           "batch_size",           "lr",
    "optimizer",       "momentum",         "weight_decay",         "adam.beta1",
    "adam.beta2",      "adam.eps",         "lr_schedule",          "seed",
    "loss.epsilon",    "eval_interval",    "head.width",           "head.normalize",
    "loss.kind",       "backbone.input_height", "backbone.input_width", "backbone.stem_channels",
    "backbone.stem_stride", "backbone.stage_channels", "backbone.stage_blocks", "backbone.taps",
    "loss.warmup_epochs"};

std::string score_stats(const nn::HeadOutput& out) {
  std::ostringstream os;
  for (std::size_t l = 0; l < out.scores.size(); ++l) {
    const auto& s = out.scores[l].data;
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    std::size_t bad = 0;
    for (double v : s) {
      if (!std::isfinite(v)) {
        ++bad;
        continue;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    os << " level" << l + 1 << "{min=" << lo << " max=" << hi << " mean=" << sum / std::max<std::size_t>(1, s.size() - bad)
       << " non_finite=" << bad << "}";
  }
  return os.str();
}

}  // namespace

DatasetView view_of(const Dataset& data) {
  DatasetView v;
  v.reserve(data.size());
  for (const auto& d : data) v.push_back(&d);
  return v;
}

DatasetView view_of(const Dataset& data, const DatasetManifest& manifest, const std::string& split) {
  if (data.size() != manifest.entries.size()) throw DataError("dataset and manifest differ in length");
  DatasetView v;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (manifest.entries[i].split == split) v.push_back(&data[i]);
  return v;
}

void TrainConfig::validate() const {
  model.backbone.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch normalization needs a batch)");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite value >= 0");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("loss.epsilon must lie in (0, 1)");
  if (eval_interval < 0) throw ConfigError("eval_interval must be >= 0");
  if (warmup_epochs < 0) throw ConfigError("loss.warmup_epochs must be >= 0");
  if (model.head_width < 1) throw ConfigError("head.width must be >= 1");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
  if (optimizer.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

FlatConfig TrainConfig::to_flat() const {
  const auto& b = model.backbone;
  return {
      {"variant", std::string(variant_name(model.variant))},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"lr", format_double(lr)},
      {"optimizer", std::string(optimizer_name(optimizer.kind))},
      {"momentum", format_double(optimizer.momentum)},
      {"weight_decay", format_double(optimizer.weight_decay)},
      {"adam.beta1", format_double(optimizer.beta1)},
      {"adam.beta2", format_double(optimizer.beta2)},
      {"adam.eps", format_double(optimizer.adam_eps)},
      {"lr_schedule", schedule == LrSchedule::kCosine ? "cosine" : "constant"},
      {"seed", std::to_string(seed)},
      {"loss.epsilon", format_double(epsilon)},
      {"eval_interval", std::to_string(eval_interval)},
      {"head.width", std::to_string(model.head_width)},
      {"head.normalize", model.head_normalize ? "true" : "false"},
      {"loss.kind", std::string(loss::loss_kind_name(loss_kind()))},
      {"loss.warmup_epochs", std::to_string(warmup_epochs)},
      {"backbone.input_height", std::to_string(b.input_height)},
      {"backbone.input_width", std::to_string(b.input_width)},
      {"backbone.stem_channels", std::to_string(b.stem_channels)},
      {"backbone.stem_stride", std::to_string(b.stem_stride)},
      {"backbone.stage_channels", join_ints(b.stage_channels)},
      {"backbone.stage_blocks", join_ints(b.stage_blocks)},
      {"backbone.taps", join_ints(b.taps)},
  };
}

TrainConfig TrainConfig::from_flat(const FlatConfig& flat) {
  for (const auto& [k, v] : flat)
    if (!kKnownKeys.contains(k)) throw ConfigError("unknown config key: " + k);
  TrainConfig c;
  c.model.variant = parse_variant(get_string(flat, "variant", std::string(variant_name(c.model.variant))));
  c.epochs = get_int(flat, "epochs", c.epochs);
  c.batch_size = get_int(flat, "batch_size", c.batch_size);
  c.lr = get_double(flat, "lr", c.lr);
  c.optimizer.kind = parse_optimizer(get_string(flat, "optimizer", "sgd-momentum"));
  c.optimizer.momentum = get_double(flat, "momentum", c.optimizer.momentum);
  c.optimizer.weight_decay = get_double(flat, "weight_decay", c.optimizer.weight_decay);
  c.optimizer.beta1 = get_double(flat, "adam.beta1", c.optimizer.beta1);
  c.optimizer.beta2 = get_double(flat, "adam.beta2", c.optimizer.beta2);
  c.optimizer.adam_eps = get_double(flat, "adam.eps", c.optimizer.adam_eps);
  const std::string sched = get_string(flat, "lr_schedule", "cosine");
  if (sched == "cosine") c.schedule = LrSchedule::kCosine;
  else if (sched == "constant") c.schedule = LrSchedule::kConstant;
  else throw ConfigError("lr_schedule must be cosine or constant, got " + sched);
  c.seed = get_u64(flat, "seed", c.seed);
  c.epsilon = get_double(flat, "loss.epsilon", c.epsilon);
  c.eval_interval = get_int(flat, "eval_interval", c.eval_interval);
  c.warmup_epochs = get_int(flat, "loss.warmup_epochs", c.warmup_epochs);
  c.model.head_width = get_int(flat, "head.width", c.model.head_width);
  c.model.head_normalize = get_bool(flat, "head.normalize", c.model.head_normalize);
  auto& b = c.model.backbone;
  b.input_height = get_int(flat, "backbone.input_height", b.input_height);
  b.input_width = get_int(flat, "backbone.input_width", b.input_width);
  b.stem_channels = get_int(flat, "backbone.stem_channels", b.stem_channels);
  b.stem_stride = get_int(flat, "backbone.stem_stride", b.stem_stride);
  b.stage_channels = get_int_list(flat, "backbone.stage_channels", b.stage_channels);
  b.stage_blocks = get_int_list(flat, "backbone.stage_blocks", b.stage_blocks);
  b.taps = get_int_list(flat, "backbone.taps", b.taps);
  if (auto it = flat.find("loss.kind"); it != flat.end() && loss::parse_loss_kind(it->second) != c.loss_kind())
    throw ConfigError("loss.kind=" + it->second + " contradicts variant " + std::string(variant_name(c.model.variant)));
  c.validate();
  return c;
}

std::string TrainConfig::hash() const {
  const std::string text = to_text(to_flat());
  const auto h = fnv1a64({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string to_json_line(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["split"] = r.split;
  j["metric"] = r.metric;
  j["value"] = r.value;
  return j.dump();
}

Trainer::Trainer(const TrainConfig& config)
    : config_((config.validate(), config)), model_(config.model), optimizer_(config.optimizer, model_.parameters()) {
  model_.init(config_.seed);
}

StepResult Trainer::train_step(const DatasetView& batch, double lr) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  std::vector<const Image8*> images;
  std::vector<LabelVector> y;
  for (const auto* item : batch) {
    images.push_back(&item->image);
    y.push_back(item->labels);
  }
  Model::Cache cache;
  model_.zero_grad();
  const nn::HeadOutput out = model_.forward(images_to_tensor(images), nn::Mode::kTrain, &cache);

  const int levels = static_cast<int>(out.logits.size());
  const int classes = out.logits.front().rows;
  const int n = static_cast<int>(batch.size());
  std::vector<loss::LevelScores> logits(static_cast<std::size_t>(n),
                                        loss::LevelScores(static_cast<std::size_t>(levels), std::vector<double>(classes)));
  for (int l = 0; l < levels; ++l)
    for (int c = 0; c < classes; ++c)
      for (int i = 0; i < n; ++i) logits[i][l][c] = out.logits[l](c, i);

  const loss::LossResult res = loss::loss_from_logits(y, logits, config_.loss_kind_at(epoch_), config_.epsilon);
  if (!std::isfinite(res.value)) {
    std::string ids;
    for (const auto* item : batch) ids += (ids.empty() ? "" : ",") + item->sample_id;
    throw NumericalError("non-finite loss at step " + std::to_string(step()) + "; batch ids [" + ids + "];" +
                         score_stats(out));
  }

  std::vector<nn::Matrix> dlogits(static_cast<std::size_t>(levels), nn::Matrix(classes, n));
  for (int l = 0; l < levels; ++l)
    for (int c = 0; c < classes; ++c)
      for (int i = 0; i < n; ++i) dlogits[l](c, i) = static_cast<float>(res.dlogits[i][l][c]);
  model_.backward(dlogits, cache);
  optimizer_.step(lr);

  StepResult r;
  r.loss = res.value;
  std::size_t neg = 0, active = 0;
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < levels; ++l)
      for (int c = 0; c < classes; ++c) {
        if (!y[i].observed(c) || y[i].value(c) == 1) continue;
        ++neg;
        active += res.gates[i].levels[l][c];
      }
  r.active_negative_fraction = neg ? static_cast<double>(active) / static_cast<double>(neg) : 0.0;
  return r;
}

double Trainer::batch_loss(const DatasetView& batch) {
  std::vector<const Image8*> images;
  std::vector<LabelVector> y;
  for (const auto* item : batch) {
    images.push_back(&item->image);
    y.push_back(item->labels);
  }
  const nn::HeadOutput out = model_.forward(images_to_tensor(images), nn::Mode::kTrain, nullptr);
  std::vector<loss::LevelScores> scores(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    for (const auto& level : out.scores) {
      std::vector<double> s(static_cast<std::size_t>(level.rows));
      for (int c = 0; c < level.rows; ++c) s[c] = level(c, static_cast<int>(i));
      scores[i].push_back(std::move(s));
    }
  if (config_.loss_kind_at(epoch_) == loss::LossKind::kPlain) return loss::plain_bce_loss(y, scores);
  std::vector<loss::GateMask> gates;
  for (std::size_t i = 0; i < batch.size(); ++i) gates.push_back(loss::compute_gates(y[i], scores[i], config_.epsilon));
  return loss::chr_loss(y, scores, gates);
}

double Trainer::lr_at(std::int64_t step, std::int64_t total_steps) const {
  if (config_.schedule == LrSchedule::kConstant || total_steps <= 0) return config_.lr;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return config_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::int64_t Trainer::steps_per_epoch(std::size_t train_size) const {
  const auto b = static_cast<std::size_t>(config_.batch_size);
  if (train_size < b) return train_size >= 2 ? 1 : 0;
  return static_cast<std::int64_t>(train_size / b);
}

double Trainer::run_epoch(const DatasetView& train) {
  const std::int64_t spe = steps_per_epoch(train.size());
  if (spe == 0) throw DataError("training set too small for one batch (need >= 2 samples)");
  const std::int64_t total = spe * config_.epochs;
  Rng rng(derive_seed(config_.seed, kEpochStream, static_cast<std::uint64_t>(epoch_)));
  const std::vector<std::size_t> order = permutation(train.size(), rng);
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(config_.batch_size), train.size());
  double sum = 0.0;
  for (std::int64_t s = 0; s < spe; ++s) {
    DatasetView batch;
    for (std::size_t k = 0; k < b; ++k) batch.push_back(train[order[static_cast<std::size_t>(s) * b + k]]);
    sum += train_step(batch, lr_at(step(), total)).loss;
  }
  ++epoch_;
  return sum / static_cast<double>(spe);
}

std::vector<nn::Param*> Trainer::state() {
  auto out = model_.state();
  for (auto* p : optimizer_.state()) out.push_back(p);
  return out;
}

void Trainer::save(const std::filesystem::path& path) {
  CheckpointMeta meta;
  meta.config = config_.to_flat();
  meta.config_hash = config_.hash();
  meta.epoch = epoch_;
  meta.step = step();
  save_checkpoint(path, meta, state());
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (ckpt.meta.config_hash != config_.hash())
    throw ConfigError("checkpoint config hash " + ckpt.meta.config_hash + " does not match run config " + config_.hash());
  restore_tensors(ckpt, state());
  epoch_ = ckpt.meta.epoch;
  optimizer_.set_steps(ckpt.meta.step);
}

TrainSummary train(Trainer& trainer, const DatasetView& train, const DatasetView& val, const TrainOptions& options) {
  if (train.empty()) throw DataError("training set is empty");
  if (std::none_of(train.begin(), train.end(), [](const DatasetItem* d) { return is_positive(d->labels); }))
    throw DataError("training set has no positive sample; refusing to train");

  TrainSummary summary;
  auto emit = [&](MetricRecord r) {
    if (options.on_metric) options.on_metric(r);
    summary.metrics.push_back(std::move(r));
  };
  const auto& cfg = trainer.config();
  if (options.checkpoint_path && trainer.epoch() == 0) trainer.save(*options.checkpoint_path);
  while (trainer.epoch() < cfg.epochs) {
    if (options.stop_after_epoch && trainer.epoch() >= *options.stop_after_epoch) break;
    const double loss = trainer.run_epoch(train);
    const std::int64_t e = trainer.epoch();
    emit({e, "train", "loss", loss});
    const bool last = e == cfg.epochs;
    const bool due = cfg.eval_interval > 0 ? e % cfg.eval_interval == 0 : last;
    if (!val.empty() && (due || last)) {
      const auto pred = eval::predict(trainer.model(), val);
      if (const auto m = eval::mean_ap(pred, val)) {
        emit({e, "val", "mAP", *m});
        summary.final_val_map = *m;
      }
    }
    if (options.checkpoint_path) trainer.save(*options.checkpoint_path);
  }
  return summary;
}

}  // namespace chr
