#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "chr/backbone.hpp"
#include "chr/datamodel.hpp"
#include "chr/head.hpp"
#include "chr/loss.hpp"

namespace chr {

/// Ablation variants.
///   baseline: one classifier on the top tap, plain BCE
///   H:   classifiers on every raw tap, fused mean, plain BCE
///   HR:  refinement + per-level classifiers, plain BCE
///   CH:  classifiers on raw taps, class-balanced loss
///   CHR: refinement + class-balanced loss
enum class Variant { kBaseline, kH, kHR, kCH, kCHR };

struct VariantTraits {
  bool multi_level = true;
  bool refine = true;
  loss::LossKind loss = loss::LossKind::kBalanced;
};

VariantTraits variant_traits(Variant v);
Variant parse_variant(std::string_view s);
std::string_view variant_name(Variant v);
inline constexpr Variant kAllVariants[] = {Variant::kBaseline, Variant::kH, Variant::kCH, Variant::kHR, Variant::kCHR};

struct ModelConfig {
  nn::BackboneConfig backbone;
  int head_width = 128;
  bool head_normalize = true;
  Variant variant = Variant::kCHR;

  nn::HeadConfig head_config() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Backbone plus head, wired per variant.
class Model {
 public:
  struct Cache {
    nn::Backbone::Cache backbone;
    nn::ChrHead::Cache head;
  };

  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  /// Deterministic initialization from a seed.
  void init(std::uint64_t seed);

  nn::HeadOutput forward(const nn::Tensor& images, nn::Mode mode, Cache* cache);
  /// Evaluation-mode inference; const, safe for concurrent callers.
  nn::HeadOutput infer(const nn::Tensor& images) const;
  void backward(const std::vector<nn::Matrix>& dlogits, const Cache& cache);

  nn::Backbone& backbone() { return backbone_; }
  const nn::Backbone& backbone() const { return backbone_; }
  nn::ChrHead& head() { return head_; }
  const nn::ChrHead& head() const { return head_; }

  std::vector<nn::Param*> parameters();
  std::vector<nn::Param*> buffers();
  /// Parameters followed by buffers.
  std::vector<nn::Param*> state();
  void zero_grad();

 private:
  ModelConfig config_;
  nn::Backbone backbone_;
  nn::ChrHead head_;
};

/// Stacks 8-bit images into an (N, 3, H, W) tensor scaled to [0, 1].
nn::Tensor images_to_tensor(const std::vector<const Image8*>& images);
nn::Tensor images_to_tensor(const std::vector<const Image*>& images);

}  // namespace chr
