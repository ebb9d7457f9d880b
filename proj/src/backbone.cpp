#include "chr/backbone.hpp"

#include "chr/errors.hpp"

namespace chr::nn {

namespace {

int conv_out(int in, int stride) { return (in + 2 - 3) / stride + 1; }

}  // namespace

void BackboneConfig::validate() const {
  if (input_height < 1 || input_width < 1) throw ConfigError("backbone input size must be positive");
  if (stem_channels < 1 || (stem_stride != 1 && stem_stride != 2)) throw ConfigError("stem must have >=1 channel, stride 1 or 2");
  if (stage_channels.empty() || stage_channels.size() != stage_blocks.size()) {
    throw ConfigError("stage_channels and stage_blocks must be nonempty and equally long");
  }
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    if (stage_channels[s] < 1 || stage_blocks[s] < 1) throw ConfigError("every stage needs >=1 channel and >=1 block");
  }
  if (taps.size() < 2) throw ConfigError("backbone needs at least 2 taps");
  if (taps.size() > stage_channels.size()) throw ConfigError("more taps than stages");
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i] < 0 || taps[i] >= static_cast<int>(stage_channels.size())) throw ConfigError("tap index out of range");
    if (i > 0 && taps[i] <= taps[i - 1]) throw ConfigError("tap indices must increase");
  }
  const auto shapes = level_shapes();
  for (std::size_t i = 1; i < shapes.size(); ++i) {
    if (shapes[i - 1].height != 2 * shapes[i].height || shapes[i - 1].width != 2 * shapes[i].width) {
      throw ConfigError("tap " + std::to_string(i) + " resolution is not half of tap " + std::to_string(i - 1));
    }
  }
}

std::vector<LevelShape> BackboneConfig::level_shapes() const {
  std::vector<LevelShape> stage_shapes;
  int h = conv_out(input_height, stem_stride);
  int w = conv_out(input_width, stem_stride);
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    h = conv_out(h, 2);
    w = conv_out(w, 2);
    stage_shapes.push_back({stage_channels[s], h, w});
  }
  std::vector<LevelShape> out;
  for (int t : taps) {
    if (t >= 0 && t < static_cast<int>(stage_shapes.size())) out.push_back(stage_shapes[static_cast<std::size_t>(t)]);
  }
  return out;
}

std::size_t BackboneConfig::parameter_count() const {
  const auto block = [](std::size_t in, std::size_t out) { return 9 * in * out + 2 * out; };
  std::size_t n = block(3, static_cast<std::size_t>(stem_channels));
  std::size_t in = static_cast<std::size_t>(stem_channels);
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    const auto out = static_cast<std::size_t>(stage_channels[s]);
    n += block(in, out) + static_cast<std::size_t>(stage_blocks[s] - 1) * block(out, out);
    in = out;
  }
  return n;
}

Backbone::Backbone(const BackboneConfig& config) : config_(config) {
  config_.validate();
  blocks_.emplace_back("backbone/stem", 3, config_.stem_channels, 3, config_.stem_stride, 1);
  int in = config_.stem_channels;
  std::vector<std::size_t> stage_end;
  for (std::size_t s = 0; s < config_.stage_channels.size(); ++s) {
    const int out = config_.stage_channels[s];
    for (int b = 0; b < config_.stage_blocks[s]; ++b) {
      const std::string name = "backbone/stage" + std::to_string(s) + ".block" + std::to_string(b);
      blocks_.emplace_back(name, b == 0 ? in : out, out, 3, b == 0 ? 2 : 1, 1);
    }
    in = out;
    stage_end.push_back(blocks_.size() - 1);
  }
  for (int t : config_.taps) tap_block_.push_back(stage_end[static_cast<std::size_t>(t)]);
}

void Backbone::init(Rng& rng) {
  for (auto& b : blocks_) b.init(rng);
}

void Backbone::check_input(const Tensor& images) const {
  if (images.channels() != 3 || images.height() != config_.input_height || images.width() != config_.input_width ||
      images.batch() < 1) {
    throw ConfigError("backbone input " + images.shape_string() + " does not match configured 3x" +
                      std::to_string(config_.input_height) + "x" + std::to_string(config_.input_width));
  }
}

FeaturePyramid Backbone::forward(const Tensor& images, Mode mode, Cache* cache) {
  check_input(images);
  if (cache) cache->blocks.assign(blocks_.size(), {});
  FeaturePyramid out;
  out.levels.resize(tap_block_.size());
  Tensor x = images;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    x = blocks_[b].forward(x, mode, cache ? &cache->blocks[b] : nullptr);
    for (std::size_t l = 0; l < tap_block_.size(); ++l) {
      if (tap_block_[l] == b) out.levels[l] = x;
    }
  }
  return out;
}

FeaturePyramid Backbone::infer(const Tensor& images) const {
  check_input(images);
  FeaturePyramid out;
  out.levels.resize(tap_block_.size());
  Tensor x = images;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    x = blocks_[b].infer(x);
    for (std::size_t l = 0; l < tap_block_.size(); ++l) {
      if (tap_block_[l] == b) out.levels[l] = x;
    }
  }
  return out;
}

Tensor Backbone::backward(const std::vector<Tensor>& level_grads, const Cache& cache, bool need_input_grad) {
  if (level_grads.size() != tap_block_.size()) throw ConfigError("backbone backward: one gradient per level required");
  Tensor g;
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    for (std::size_t l = 0; l < tap_block_.size(); ++l) {
      if (tap_block_[l] != b || level_grads[l].empty()) continue;
      if (g.empty()) {
        g = level_grads[l];
      } else {
        g.add(level_grads[l]);
      }
    }
    if (g.empty()) continue;  // nothing above this block receives gradient
    g = blocks_[b].backward(g, cache.blocks[b], b > 0 || need_input_grad);
  }
  return g;
}

std::vector<Param*> Backbone::parameters() {
  std::vector<Param*> out;
  for (auto& b : blocks_) {
    for (auto* p : b.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Param*> Backbone::buffers() {
  std::vector<Param*> out;
  for (auto& b : blocks_) {
    for (auto* p : b.buffers()) out.push_back(p);
  }
  return out;
}

}  // namespace chr::nn
