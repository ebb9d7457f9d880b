#pragma once

#include <cstddef>
#include <vector>

#include "chr/layers.hpp"
#include "chr/tensor.hpp"

namespace chr::nn {

/// Feature maps from L backbone taps; levels[0] is the finest (level 1).
struct FeaturePyramid {
  std::vector<Tensor> levels;

  int size() const { return static_cast<int>(levels.size()); }
};

struct LevelShape {
  int channels = 0;
  int height = 0;
  int width = 0;
};

struct BackboneConfig {
  int input_height = 96;
  int input_width = 96;
  int stem_channels = 8;
  int stem_stride = 2;
  /// One entry per stage; every stage opens with a stride-2 block.
  std::vector<int> stage_channels = {8, 16, 32, 64};
  std::vector<int> stage_blocks = {1, 1, 1, 1};
  /// Stage indices (0-based, increasing) whose outputs form the pyramid.
  std::vector<int> taps = {1, 2, 3};

  /// Throws ConfigError unless taps are increasing, L >= 2, and consecutive
  /// tap resolutions halve exactly.
  void validate() const;
  int num_levels() const { return static_cast<int>(taps.size()); }
  std::vector<LevelShape> level_shapes() const;
  /// Learnable parameter count (conv weights plus normalization scale/shift).
  std::size_t parameter_count() const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Stem plus stages of [3x3 conv -> batch norm -> ReLU] blocks.
class Backbone {
 public:
  struct Cache {
    std::vector<ConvBnReluCache> blocks;
  };

  explicit Backbone(const BackboneConfig& config);

  const BackboneConfig& config() const { return config_; }
  void init(Rng& rng);

  /// `images` is (N, 3, H, W) in the configured size. Training mode updates
  /// normalization statistics; pass a cache to enable backward().
  FeaturePyramid forward(const Tensor& images, Mode mode, Cache* cache);
  /// Evaluation-mode forward that mutates nothing; safe to call concurrently.
  FeaturePyramid infer(const Tensor& images) const;

  /// Back-propagates per-level gradients (empty tensors mean zero) and
  /// accumulates parameter gradients. Returns the input gradient when asked.
  Tensor backward(const std::vector<Tensor>& level_grads, const Cache& cache, bool need_input_grad = false);

  std::vector<Param*> parameters();
  std::vector<Param*> buffers();

 private:
  void check_input(const Tensor& images) const;

  BackboneConfig config_;
  std::vector<ConvBnRelu> blocks_;
  std::vector<std::size_t> tap_block_;  // block index producing each level
};

}  // namespace chr::nn
