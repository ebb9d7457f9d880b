#include "chr/model.hpp"

#include <string>

#include "chr/errors.hpp"
#include "chr/rng.hpp"

namespace chr {

VariantTraits variant_traits(Variant v) {
  switch (v) {
    case Variant::kBaseline: return {false, false, loss::LossKind::kPlain};
    case Variant::kH: return {true, false, loss::LossKind::kPlain};
    case Variant::kHR: return {true, true, loss::LossKind::kPlain};
    case Variant::kCH: return {true, false, loss::LossKind::kBalanced};
    case Variant::kCHR: return {true, true, loss::LossKind::kBalanced};
  }
  throw ConfigError("unknown variant");
}

Variant parse_variant(std::string_view s) {
  if (s == "baseline") return Variant::kBaseline;
  if (s == "H") return Variant::kH;
  if (s == "HR") return Variant::kHR;
  if (s == "CH") return Variant::kCH;
  if (s == "CHR") return Variant::kCHR;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected baseline, H, HR, CH, CHR)");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kH: return "H";
    case Variant::kHR: return "HR";
    case Variant::kCH: return "CH";
    case Variant::kCHR: return "CHR";
  }
  return "?";
}

nn::HeadConfig ModelConfig::head_config() const {
  const auto t = variant_traits(variant);
  nn::HeadConfig h;
  h.num_classes = kNumProhibited;
  h.width = head_width;
  h.refine = t.refine;
  h.multi_level = t.multi_level;
  h.normalize = head_normalize;
  return h;
}

Model::Model(const ModelConfig& config)
    : config_(config),
      backbone_(config.backbone),
      head_(config.head_config(), config.backbone.level_shapes()) {}

void Model::init(std::uint64_t seed) {
  Rng backbone_rng(derive_seed(seed, 0x696e6974 /* "init" */, 0));
  Rng head_rng(derive_seed(seed, 0x696e6974, 1));
  backbone_.init(backbone_rng);
  head_.init(head_rng);
}

nn::HeadOutput Model::forward(const nn::Tensor& images, nn::Mode mode, Cache* cache) {
  const auto pyramid = backbone_.forward(images, mode, cache ? &cache->backbone : nullptr);
  return head_.forward(pyramid, mode, cache ? &cache->head : nullptr);
}

nn::HeadOutput Model::infer(const nn::Tensor& images) const { return head_.infer(backbone_.infer(images)); }

void Model::backward(const std::vector<nn::Matrix>& dlogits, const Cache& cache) {
  backbone_.backward(head_.backward(dlogits, cache.head), cache.backbone);
}

std::vector<nn::Param*> Model::parameters() {
  auto out = backbone_.parameters();
  for (auto* p : head_.parameters()) out.push_back(p);
  return out;
}

std::vector<nn::Param*> Model::buffers() {
  auto out = backbone_.buffers();
  for (auto* p : head_.buffers()) out.push_back(p);
  return out;
}

std::vector<nn::Param*> Model::state() {
  auto out = parameters();
  for (auto* p : buffers()) out.push_back(p);
  return out;
}

void Model::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

nn::Tensor images_to_tensor(const std::vector<const Image8*>& images) {
  if (images.empty()) throw ConfigError("empty image batch");
  const int h = images.front()->height;
  const int w = images.front()->width;
  nn::Tensor t(3, static_cast<int>(images.size()), h, w);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image8& img = *images[n];
    if (img.height != h || img.width != w) throw DataError("images in one batch differ in size");
    for (int c = 0; c < 3; ++c) {
      auto plane = t.plane(c, static_cast<int>(n));
      for (int i = 0; i < h * w; ++i) plane[static_cast<std::size_t>(i)] = img.data[static_cast<std::size_t>(i) * 3 + c] / 255.0f;
    }
  }
  return t;
}

nn::Tensor images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ConfigError("empty image batch");
  const int h = images.front()->height;
  const int w = images.front()->width;
  nn::Tensor t(3, static_cast<int>(images.size()), h, w);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& img = *images[n];
    if (img.height != h || img.width != w) throw DataError("images in one batch differ in size");
    for (int c = 0; c < 3; ++c) {
      auto plane = t.plane(c, static_cast<int>(n));
      for (int i = 0; i < h * w; ++i) plane[static_cast<std::size_t>(i)] = img.data[static_cast<std::size_t>(i) * 3 + c];
    }
  }
  return t;
}

}  // namespace chr
