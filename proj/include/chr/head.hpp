#pragma once

#include <vector>

#include "chr/backbone.hpp"
#include "chr/layers.hpp"
#include "chr/tensor.hpp"

namespace chr::nn {

struct HeadConfig {
  int num_classes = 5;
  /// Output channels of every refinement block.
  int width = 128;
  /// Reversed neighbour connections (HR / CHR variants).
  bool refine = true;
  /// Classify every pyramid level; false keeps only the top level (plain baseline).
  bool multi_level = true;
  /// Batch normalization inside refinement blocks.
  bool normalize = true;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

/// Refines level l from concat(x^(l), upsample(x~^(l+1))) with a 1x1
/// conv -> batch norm -> ReLU projection to the head width.
class RefinementBlock {
 public:
  RefinementBlock(const std::string& name, int lower_channels, int upper_channels, int width, bool normalize);

  int lower_channels() const { return lower_; }
  int upper_channels() const { return upper_; }
  int width() const { return proj.conv.out_channels(); }

  ConvBnRelu proj;

 private:
  int lower_ = 0;
  int upper_ = 0;
};

/// Global average pooling followed by one linear map to class logits.
class LevelClassifier {
 public:
  LevelClassifier(const std::string& name, int channels, int num_classes);

  int channels() const { return fc.in_features(); }
  /// Logits (classes x N); `pooled` receives the GAP features when given.
  Matrix logits(const Tensor& features, Matrix* pooled = nullptr) const;
  /// Row c of the linear map.
  std::vector<float> weight_row(int c) const;
  float bias(int c) const { return fc.bias.value.at(static_cast<std::size_t>(c)); }

  Linear fc;
};

struct HeadOutput {
  std::vector<Matrix> logits;  // per head level, classes x N
  std::vector<MatrixD> scores;  // sigmoid(logits), computed in double
  MatrixD fused;               // mean of `scores` over levels
  FeaturePyramid refined;      // features each classifier saw
};

/// Hierarchical refinement head. Consumes the backbone pyramid (or only its
/// top level when multi_level is off), refines top-down, classifies every
/// level and averages the level probabilities.
class ChrHead {
 public:
  struct Cache {
    std::vector<ConvBnReluCache> blocks;   // index l refines level l (0-based)
    std::vector<bool> upsampled;           // per block: upper level was upsampled
    std::vector<Matrix> pooled;            // per head level
    std::vector<LevelShape> level_shapes;  // refined shapes per head level
  };

  ChrHead(const HeadConfig& config, const std::vector<LevelShape>& backbone_levels);

  const HeadConfig& config() const { return config_; }
  /// Number of classified levels.
  int num_levels() const { return static_cast<int>(classifiers_.size()); }
  void init(Rng& rng);

  /// Backbone pyramid -> pyramid the head operates on (all levels, or the top one).
  FeaturePyramid select_levels(const FeaturePyramid& backbone) const;

  /// x~^(L) = x^(L); for l = L-1 .. 1, x~^(l) = g^(l)(concat(x^(l), up(x~^(l+1)))).
  /// Without refinement the input is returned unchanged. `trace` receives the
  /// 1-based level of every block applied, in application order.
  FeaturePyramid refine(const FeaturePyramid& pyramid, Mode mode, Cache* cache, std::vector<int>* trace = nullptr);
  FeaturePyramid refine_infer(const FeaturePyramid& pyramid) const;
  HeadOutput classify(const FeaturePyramid& refined, Cache* cache = nullptr) const;

  /// select_levels -> refine -> classify.
  HeadOutput forward(const FeaturePyramid& backbone, Mode mode, Cache* cache);
  HeadOutput infer(const FeaturePyramid& backbone) const;

  /// Gradients of the loss w.r.t. each level's logits -> gradients w.r.t.
  /// every backbone level (empty tensors for levels the head ignores).
  std::vector<Tensor> backward(const std::vector<Matrix>& dlogits, const Cache& cache);

  /// Class activation map on a refined level: dot(weight row c, x~^(l)(u, v, :)).
  /// `level` is 0-based among head levels.
  MatrixD cam(const Tensor& refined_level, int sample, int level, int cls) const;

  const LevelClassifier& classifier(int level) const { return classifiers_.at(static_cast<std::size_t>(level)); }
  LevelClassifier& classifier(int level) { return classifiers_.at(static_cast<std::size_t>(level)); }
  RefinementBlock& block(int level) { return blocks_.at(static_cast<std::size_t>(level)); }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }

  std::vector<Param*> parameters();
  std::vector<Param*> buffers();

 private:
  void check_pyramid(const FeaturePyramid& p) const;
  Tensor refine_input(const Tensor& lower, const Tensor& upper, int level, bool* upsampled) const;

  HeadConfig config_;
  int backbone_levels_ = 0;
  std::vector<LevelShape> input_shapes_;  // shapes of the levels the head consumes
  std::vector<RefinementBlock> blocks_;
  std::vector<LevelClassifier> classifiers_;
};

}  // namespace chr::nn
