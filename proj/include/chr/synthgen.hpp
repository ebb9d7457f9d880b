#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "chr/datamodel.hpp"
#include "chr/image.hpp"
#include "chr/rng.hpp"

namespace chr::synth {

/// Shape families. The first five are the prohibited classes in label order;
/// the rest are clutter.
enum class ShapeFamily {
  kAngularL,     // gun
  kBlade,        // knife
  kOpenWrench,   // wrench
  kJawPair,      // pliers
  kCrossBlades,  // scissors
  kDisc,
  kBox,
  kRing,
  kBar,
  kTriangle,
  kCable,
};

std::string_view family_name(ShapeFamily f);

/// Parametric sampler for one class-conditional sub-image distribution.
struct GlyphSpec {
  int class_id = 0;  // [0, kNumProhibited) for prohibited glyphs, >= kNumProhibited for clutter
  ShapeFamily family = ShapeFamily::kBox;
  std::array<float, 3> color{0.2f, 0.4f, 0.9f};  // material pseudo-colour
  float color_jitter = 0.05f;
  float size_min = 20.0f;  // pixels
  float size_max = 36.0f;
  float rotation_min = 0.0f;  // radians
  float rotation_max = 6.2831853f;
  float opacity_min = 0.4f;
  float opacity_max = 0.7f;

  bool prohibited() const { return class_id < kNumProhibited; }
  /// Throws ConfigError on an invalid range or opacity outside (0, 1].
  void validate() const;
};

/// Concrete draw of a glyph: where it lands and how it looks.
struct GlyphPlacement {
  double center_x = 0.0;
  double center_y = 0.0;
  double size = 8.0;
  double rotation = 0.0;
  double opacity = 1.0;
  std::array<float, 3> color{1.0f, 1.0f, 1.0f};
};

struct RenderedGlyph {
  Image sub_image;  // zero outside the glyph's support
  BBox bbox;        // tight bounds of the nonzero support
};

/// True when local point (u, v), in units of the glyph size, lies in the shape.
bool shape_contains(ShapeFamily family, double u, double v);

/// Rasterizes one glyph. Throws DataError when no pixel of the glyph lands on the canvas.
RenderedGlyph render_glyph_at(const GlyphSpec& spec, const GlyphPlacement& placement, int height,
                              int width);

/// Draws a placement from `spec` and renders it; degenerate draws are re-sampled
/// up to `max_retries` times before a DataError.
RenderedGlyph render_glyph(const GlyphSpec& spec, Rng& rng, int height, int width,
                           int max_retries = 16);

struct GlyphLibrary {
  std::vector<GlyphSpec> prohibited;  // index == class id
  std::vector<GlyphSpec> clutter;

  /// Five prohibited families plus six clutter families.
  static GlyphLibrary standard();
  void validate() const;
};

enum class CompositionMode { kAdditive, kAttenuation };

CompositionMode parse_mode(std::string_view s);
std::string_view mode_name(CompositionMode m);

struct PlacedItem {
  int class_id = 0;
  Image sub_image;
  BBox bbox;
  bool prohibited() const { return class_id < kNumProhibited; }
};

struct Scene {
  Image background;
  std::vector<PlacedItem> items;
  CompositionMode mode = CompositionMode::kAdditive;

  /// 1 for class c iff a prohibited item of class c was placed.
  LabelVector labels() const;
  std::vector<BBox> prohibited_boxes() const;
};

/// Additive: clamp(background + sum of sub-images, 0, 1). Attenuation:
/// 1 - (1 - background) * prod(1 - sub-image), per channel. Per-pixel terms
/// are combined in a canonical order, so the result does not depend on the
/// order of `scene.items`.
Image compose(const Scene& scene);

/// Low-amplitude coloured noise plus 0-3 large soft blobs.
Image make_background(Rng& rng, int height, int width);

struct GenerateOptions {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::uint64_t seed = 0;
  int canvas = 96;
  CompositionMode mode = CompositionMode::kAdditive;
};

/// Scene for the sample at `index` (positives occupy [0, n_pos)). Depends only
/// on (seed, index, positive), never on generation order.
Scene generate_scene(const GlyphLibrary& lib, const GenerateOptions& opts, std::size_t index);

std::string sample_id_for(std::size_t index);

/// Composed scene stored at 8-bit precision, matching what the PNG holds.
Sample generate_sample(const GlyphLibrary& lib, const GenerateOptions& opts, std::size_t index);

/// Generates every sample in memory.
Dataset generate_in_memory(const GlyphLibrary& lib, const GenerateOptions& opts);

/// Same samples written as `out_dir/images/<id>.png` plus `out_dir/manifest.jsonl`
/// with split "pool". Returns the manifest.
DatasetManifest generate_dataset(const GlyphLibrary& lib, const GenerateOptions& opts,
                                 const std::filesystem::path& out_dir);

struct SubsetSpec {
  std::size_t ratio = 10;  // negatives per positive
  std::size_t positive_count = 0;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;

  void validate() const;
};

/// Number of items the stratified split sends to the training side.
std::size_t train_share(std::size_t n, double train_fraction);

/// Samples positive_count positives and ratio * positive_count negatives
/// without replacement, then splits each group separately. Entries keep
/// the pool's order; split tags are set to "train" / "test".
std::pair<DatasetManifest, DatasetManifest> build_subsets(const DatasetManifest& pool,
                                                          const SubsetSpec& spec);

}  // namespace chr::synth
