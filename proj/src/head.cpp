#include "chr/head.hpp"

#include <cmath>

#include "chr/errors.hpp"

namespace chr::nn {

RefinementBlock::RefinementBlock(const std::string& name, int lower_channels, int upper_channels, int width,
                                 bool normalize)
    : proj(name, lower_channels + upper_channels, width, 1, 1, 0, normalize),
      lower_(lower_channels),
      upper_(upper_channels) {}

LevelClassifier::LevelClassifier(const std::string& name, int channels, int num_classes)
    : fc(name, channels, num_classes) {}

Matrix LevelClassifier::logits(const Tensor& features, Matrix* pooled) const {
  Matrix p = global_avg_pool(features);
  Matrix out = fc.forward(p);
  if (pooled) *pooled = std::move(p);
  return out;
}

std::vector<float> LevelClassifier::weight_row(int c) const {
  const int in = fc.in_features();
  const auto begin = fc.weight.value.begin() + static_cast<std::ptrdiff_t>(c) * in;
  return {begin, begin + in};
}

ChrHead::ChrHead(const HeadConfig& config, const std::vector<LevelShape>& backbone_levels)
    : config_(config), backbone_levels_(static_cast<int>(backbone_levels.size())) {
  if (backbone_levels.empty()) throw ConfigError("head needs at least one pyramid level");
  if (config_.num_classes < 1) throw ConfigError("head needs at least one class");
  if (config_.refine && config_.width < 1) throw ConfigError("head width must be positive");
  if (config_.multi_level) {
    input_shapes_ = backbone_levels;
  } else {
    input_shapes_ = {backbone_levels.back()};
  }
  const int levels = static_cast<int>(input_shapes_.size());
  if (config_.refine) {
    for (int l = 0; l + 1 < levels; ++l) {
      const int upper = (l + 1 == levels - 1) ? input_shapes_.back().channels : config_.width;
      blocks_.emplace_back("head/refine" + std::to_string(l + 1), input_shapes_[static_cast<std::size_t>(l)].channels,
                           upper, config_.width, config_.normalize);
    }
  }
  for (int l = 0; l < levels; ++l) {
    const bool refined = config_.refine && l + 1 < levels;
    const int channels = refined ? config_.width : input_shapes_[static_cast<std::size_t>(l)].channels;
    classifiers_.emplace_back("head/classifier" + std::to_string(l + 1), channels, config_.num_classes);
  }
}

void ChrHead::init(Rng& rng) {
  for (auto& b : blocks_) b.proj.init(rng);
  for (auto& c : classifiers_) c.fc.init(rng);
}

FeaturePyramid ChrHead::select_levels(const FeaturePyramid& backbone) const {
  if (backbone.size() != backbone_levels_) {
    throw ConfigError("head expects " + std::to_string(backbone_levels_) + " pyramid levels, got " +
                      std::to_string(backbone.size()));
  }
  if (config_.multi_level) return backbone;
  return FeaturePyramid{{backbone.levels.back()}};
}

void ChrHead::check_pyramid(const FeaturePyramid& p) const {
  if (p.size() != static_cast<int>(input_shapes_.size())) {
    throw ConfigError("head consumes " + std::to_string(input_shapes_.size()) + " levels, got " +
                      std::to_string(p.size()));
  }
  for (int l = 0; l < p.size(); ++l) {
    const auto& t = p.levels[static_cast<std::size_t>(l)];
    if (t.channels() != input_shapes_[static_cast<std::size_t>(l)].channels) {
      throw ConfigError("level " + std::to_string(l + 1) + ": expected " +
                        std::to_string(input_shapes_[static_cast<std::size_t>(l)].channels) + " channels, got " +
                        std::to_string(t.channels()));
    }
  }
}

Tensor ChrHead::refine_input(const Tensor& lower, const Tensor& upper, int level, bool* upsampled) const {
  if (lower.batch() != upper.batch()) throw ConfigError("level " + std::to_string(level) + ": batch size mismatch");
  if (upper.height() == lower.height() && upper.width() == lower.width()) {
    *upsampled = false;
    return concat_channels(lower, upper);
  }
  if (2 * upper.height() == lower.height() && 2 * upper.width() == lower.width()) {
    *upsampled = true;
    return concat_channels(lower, upsample2x(upper));
  }
  throw ConfigError("level " + std::to_string(level) + ": spatial size " + lower.shape_string() +
                    " is neither equal to nor twice level " + std::to_string(level + 1) + " " + upper.shape_string());
}

FeaturePyramid ChrHead::refine(const FeaturePyramid& pyramid, Mode mode, Cache* cache, std::vector<int>* trace) {
  check_pyramid(pyramid);
  const int levels = pyramid.size();
  if (cache) {
    cache->blocks.assign(blocks_.size(), {});
    cache->upsampled.assign(blocks_.size(), false);
  }
  if (!config_.refine) return pyramid;
  FeaturePyramid out;
  out.levels.resize(static_cast<std::size_t>(levels));
  out.levels.back() = pyramid.levels.back();
  for (int l = levels - 2; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    bool up = false;
    const Tensor in = refine_input(pyramid.levels[li], out.levels[li + 1], l + 1, &up);
    out.levels[li] = blocks_[li].proj.forward(in, mode, cache ? &cache->blocks[li] : nullptr);
    if (cache) cache->upsampled[li] = up;
    if (trace) trace->push_back(l + 1);
  }
  return out;
}

FeaturePyramid ChrHead::refine_infer(const FeaturePyramid& pyramid) const {
  check_pyramid(pyramid);
  if (!config_.refine) return pyramid;
  const int levels = pyramid.size();
  FeaturePyramid out;
  out.levels.resize(static_cast<std::size_t>(levels));
  out.levels.back() = pyramid.levels.back();
  for (int l = levels - 2; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    bool up = false;
    out.levels[li] = blocks_[li].proj.infer(refine_input(pyramid.levels[li], out.levels[li + 1], l + 1, &up));
  }
  return out;
}

HeadOutput ChrHead::classify(const FeaturePyramid& refined, Cache* cache) const {
  if (refined.size() != num_levels()) throw ConfigError("classify: level count mismatch");
  HeadOutput out;
  if (cache) {
    cache->pooled.assign(static_cast<std::size_t>(num_levels()), {});
    cache->level_shapes.clear();
  }
  const int n = refined.levels.front().batch();
  out.fused = MatrixD(config_.num_classes, n, 0.0);
  for (int l = 0; l < num_levels(); ++l) {
    const auto li = static_cast<std::size_t>(l);
    const Tensor& f = refined.levels[li];
    if (f.channels() != classifiers_[li].channels()) {
      throw ConfigError("level " + std::to_string(l + 1) + ": classifier expects " +
                        std::to_string(classifiers_[li].channels()) + " channels, got " + std::to_string(f.channels()));
    }
    Matrix logits = classifiers_[li].logits(f, cache ? &cache->pooled[li] : nullptr);
    MatrixD scores(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.data.size(); ++i) {
      scores.data[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits.data[i])));
      out.fused.data[i] += scores.data[i];
    }
    if (cache) cache->level_shapes.push_back({f.channels(), f.height(), f.width()});
    out.logits.push_back(std::move(logits));
    out.scores.push_back(std::move(scores));
  }
  for (double& v : out.fused.data) v /= num_levels();
  out.refined = refined;
  return out;
}

HeadOutput ChrHead::forward(const FeaturePyramid& backbone, Mode mode, Cache* cache) {
  return classify(refine(select_levels(backbone), mode, cache), cache);
}

HeadOutput ChrHead::infer(const FeaturePyramid& backbone) const {
  return classify(refine_infer(select_levels(backbone)));
}

std::vector<Tensor> ChrHead::backward(const std::vector<Matrix>& dlogits, const Cache& cache) {
  const int levels = num_levels();
  if (static_cast<int>(dlogits.size()) != levels) throw ConfigError("head backward: one gradient per level required");
  std::vector<Tensor> d_refined(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    const Matrix dpooled = classifiers_[li].fc.backward(dlogits[li], cache.pooled[li]);
    d_refined[li] = global_avg_pool_backward(dpooled, cache.level_shapes[li].height, cache.level_shapes[li].width);
  }
  std::vector<Tensor> d_input(static_cast<std::size_t>(levels));
  if (config_.refine) {
    for (int l = 0; l + 1 < levels; ++l) {
      const auto li = static_cast<std::size_t>(l);
      const Tensor dcat = blocks_[li].proj.backward(d_refined[li], cache.blocks[li], true);
      Tensor d_upper;
      split_channels(dcat, blocks_[li].lower_channels(), d_input[li], d_upper);
      d_refined[li + 1].add(cache.upsampled[li] ? upsample2x_backward(d_upper) : d_upper);
    }
    d_input.back() = std::move(d_refined.back());
  } else {
    d_input = std::move(d_refined);
  }
  if (config_.multi_level) return d_input;
  std::vector<Tensor> out(static_cast<std::size_t>(backbone_levels_));
  out.back() = std::move(d_input.front());
  return out;
}

MatrixD ChrHead::cam(const Tensor& refined_level, int sample, int level, int cls) const {
  if (cls < 0 || cls >= config_.num_classes) throw ConfigError("CAM class index out of range: " + std::to_string(cls));
  if (level < 0 || level >= num_levels()) throw ConfigError("CAM level out of range: " + std::to_string(level));
  if (sample < 0 || sample >= refined_level.batch()) throw ConfigError("CAM sample out of range");
  const auto& clf = classifiers_[static_cast<std::size_t>(level)];
  if (refined_level.channels() != clf.channels()) throw ConfigError("CAM: channel mismatch");
  const std::vector<float> w = clf.weight_row(cls);
  MatrixD out(refined_level.height(), refined_level.width(), 0.0);
  for (int k = 0; k < refined_level.channels(); ++k) {
    auto plane = refined_level.plane(k, sample);
    const double wk = w[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < plane.size(); ++i) out.data[i] += wk * plane[i];
  }
  return out;
}

std::vector<Param*> ChrHead::parameters() {
  std::vector<Param*> out;
  for (auto& b : blocks_) {
    for (auto* p : b.proj.parameters()) out.push_back(p);
  }
  for (auto& c : classifiers_) {
    out.push_back(&c.fc.weight);
    out.push_back(&c.fc.bias);
  }
  return out;
}

std::vector<Param*> ChrHead::buffers() {
  std::vector<Param*> out;
  for (auto& b : blocks_) {
    for (auto* p : b.proj.buffers()) out.push_back(p);
  }
  return out;
}

}  // namespace chr::nn
