#include "chr/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "chr/errors.hpp"

namespace chr::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool in_rect(double u, double v, double u0, double u1, double v0, double v1) {
  return u >= u0 && u <= u1 && v >= v0 && v <= v1;
}

// Rectangle centred at (cu, cv) with half extents (hl along its axis, hw
// across), rotated by `angle`.
bool in_rot_rect(double u, double v, double cu, double cv, double hl, double hw, double angle) {
  const double du = u - cu;
  const double dv = v - cv;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double a = c * du + s * dv;
  const double b = -s * du + c * dv;
  return std::abs(a) <= hl && std::abs(b) <= hw;
}

bool in_ring(double u, double v, double cu, double cv, double r_in, double r_out) {
  const double d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
  return d2 <= r_out * r_out && d2 >= r_in * r_in;
}

bool in_disc(double u, double v, double cu, double cv, double r) { return in_ring(u, v, cu, cv, 0.0, r); }

bool gun(double u, double v) {
  return in_rect(u, v, -0.5, 0.45, -0.30, -0.12) ||      // barrel
         in_rect(u, v, 0.02, 0.45, -0.14, -0.02) ||      // frame
         in_rot_rect(u, v, 0.30, 0.18, 0.24, 0.09, 1.25) ||  // grip
         in_ring(u, v, 0.06, 0.03, 0.035, 0.075);        // trigger guard
}

bool knife(double u, double v) {
  const bool blade = u >= -0.5 && u <= 0.15 && v >= -0.09 && v <= -0.09 + 0.18 * (u + 0.5) / 0.65;
  return blade || in_rect(u, v, 0.15, 0.2, -0.14, 0.14) || in_rect(u, v, 0.2, 0.5, -0.07, 0.07);
}

bool wrench(double u, double v) {
  const bool shaft = in_rect(u, v, -0.24, 0.3, -0.06, 0.06);
  const bool open_head = in_ring(u, v, -0.34, 0.0, 0.0, 0.16) && !(u < -0.3 && std::abs(v) < 0.07);
  const bool ring_head = in_ring(u, v, 0.38, 0.0, 0.05, 0.12);
  return shaft || open_head || ring_head;
}

bool pliers(double u, double v) {
  return in_disc(u, v, 0.0, -0.1, 0.07) ||
         in_rot_rect(u, v, 0.09, 0.2, 0.31, 0.045, std::atan2(0.6, 0.18)) ||
         in_rot_rect(u, v, -0.09, 0.2, 0.31, 0.045, std::atan2(0.6, -0.18)) ||
         in_rot_rect(u, v, 0.025, -0.3, 0.2, 0.055, std::atan2(-0.4, 0.05)) ||
         in_rot_rect(u, v, -0.025, -0.3, 0.2, 0.055, std::atan2(-0.4, -0.05));
}

bool scissors(double u, double v) {
  const double a = std::numbers::pi / 2.0;
  return in_rot_rect(u, v, 0.0, -0.12, 0.38, 0.035, a + 0.35) ||
         in_rot_rect(u, v, 0.0, -0.12, 0.38, 0.035, a - 0.35) ||
         in_ring(u, v, 0.17, 0.33, 0.05, 0.11) || in_ring(u, v, -0.17, 0.33, 0.05, 0.11);
}

bool cable(double u, double v) {
  if (u < -0.5 || u > 0.5) return false;
  const double center = 0.15 * std::sin(kTwoPi * 1.5 * u);
  return std::abs(v - center) <= 0.05;
}

}  // namespace

std::string_view family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::kAngularL: return "angular-L";
    case ShapeFamily::kBlade: return "blade";
    case ShapeFamily::kOpenWrench: return "open-wrench";
    case ShapeFamily::kJawPair: return "jaw-pair";
    case ShapeFamily::kCrossBlades: return "cross-blades";
    case ShapeFamily::kDisc: return "disc";
    case ShapeFamily::kBox: return "box";
    case ShapeFamily::kRing: return "ring";
    case ShapeFamily::kBar: return "bar";
    case ShapeFamily::kTriangle: return "triangle";
    case ShapeFamily::kCable: return "cable";
  }
  return "unknown";
}

bool shape_contains(ShapeFamily family, double u, double v) {
  switch (family) {
    case ShapeFamily::kAngularL: return gun(u, v);
    case ShapeFamily::kBlade: return knife(u, v);
    case ShapeFamily::kOpenWrench: return wrench(u, v);
    case ShapeFamily::kJawPair: return pliers(u, v);
    case ShapeFamily::kCrossBlades: return scissors(u, v);
    case ShapeFamily::kDisc: return in_disc(u, v, 0.0, 0.0, 0.5);
    case ShapeFamily::kBox: return std::abs(u) < 0.5 && std::abs(v) < 0.5;
    case ShapeFamily::kRing: return in_ring(u, v, 0.0, 0.0, 0.3, 0.5);
    case ShapeFamily::kBar: return std::abs(u) < 0.5 && std::abs(v) < 0.12;
    case ShapeFamily::kTriangle: return v >= -0.45 && v <= 0.45 && std::abs(u) <= 0.5 * (v + 0.45) / 0.9;
    case ShapeFamily::kCable: return cable(u, v);
  }
  return false;
}

void GlyphSpec::validate() const {
  if (class_id < 0) throw ConfigError("glyph class id must be nonnegative");
  if (!(opacity_min > 0.0f && opacity_min <= opacity_max && opacity_max <= 1.0f)) {
    throw ConfigError("glyph opacity range must lie in (0, 1]");
  }
  if (!(size_min > 0.0f && size_min <= size_max)) throw ConfigError("glyph size range invalid");
  if (rotation_min > rotation_max) throw ConfigError("glyph rotation range invalid");
  for (float c : color) {
    if (c < 0.0f || c > 1.0f) throw ConfigError("glyph colour must lie in [0, 1]");
  }
}

RenderedGlyph render_glyph_at(const GlyphSpec& spec, const GlyphPlacement& p, int height, int width) {
  RenderedGlyph out{Image(height, width), BBox{width, height, 0, 0, spec.class_id}};
  // Every family fits in the unit square, so the glyph lies within
  // size/sqrt(2) of its centre.
  const double reach = p.size * 0.75 + 1.0;
  const int y0 = std::max(0, static_cast<int>(std::floor(p.center_y - reach)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p.center_y + reach)));
  const int x0 = std::max(0, static_cast<int>(std::floor(p.center_x - reach)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p.center_x + reach)));
  const double c = std::cos(p.rotation);
  const double s = std::sin(p.rotation);
  std::array<float, 3> value{};
  for (int ch = 0; ch < 3; ++ch) {
    value[ch] = static_cast<float>(p.opacity * std::clamp(p.color[ch], 0.0f, 1.0f));
  }
  bool any = false;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - p.center_x;
      const double dy = y + 0.5 - p.center_y;
      const double u = (c * dx + s * dy) / p.size;
      const double v = (-s * dx + c * dy) / p.size;
      if (!shape_contains(spec.family, u, v)) continue;
      for (int ch = 0; ch < 3; ++ch) out.sub_image.at(y, x, ch) = value[ch];
      if (value[0] > 0.0f || value[1] > 0.0f || value[2] > 0.0f) {
        any = true;
        out.bbox.x_min = std::min(out.bbox.x_min, x);
        out.bbox.y_min = std::min(out.bbox.y_min, y);
        out.bbox.x_max = std::max(out.bbox.x_max, x + 1);
        out.bbox.y_max = std::max(out.bbox.y_max, y + 1);
      }
    }
  }
  if (!any) throw DataError("glyph '" + std::string(family_name(spec.family)) + "' has no support on the canvas");
  return out;
}

RenderedGlyph render_glyph(const GlyphSpec& spec, Rng& rng, int height, int width, int max_retries) {
  spec.validate();
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    GlyphPlacement p;
    p.size = rng.uniform(spec.size_min, spec.size_max);
    p.rotation = rng.uniform(spec.rotation_min, spec.rotation_max);
    p.opacity = rng.uniform(spec.opacity_min, spec.opacity_max);
    // Keep most of the glyph on the canvas; clipping at the border is allowed.
    const double margin = p.size * 0.3;
    p.center_x = rng.uniform(std::min(margin, width / 2.0), std::max(width - margin, width / 2.0));
    p.center_y = rng.uniform(std::min(margin, height / 2.0), std::max(height - margin, height / 2.0));
    for (int ch = 0; ch < 3; ++ch) {
      p.color[ch] = static_cast<float>(
          std::clamp(spec.color[ch] + rng.uniform(-spec.color_jitter, spec.color_jitter), 0.0, 1.0));
    }
    try {
      return render_glyph_at(spec, p, height, width);
    } catch (const DataError&) {
      if (attempt == max_retries) throw;
    }
  }
  throw DataError("glyph placement retries exhausted");
}

GlyphLibrary GlyphLibrary::standard() {
  GlyphLibrary lib;
  // Prohibited items are all metal, so they share one pseudo-colour and
  // differ only by shape.
  const std::array<float, 3> metal{0.15f, 0.32f, 0.82f};
  const ShapeFamily prohibited[] = {ShapeFamily::kAngularL, ShapeFamily::kBlade, ShapeFamily::kOpenWrench,
                                    ShapeFamily::kJawPair, ShapeFamily::kCrossBlades};
  for (int c = 0; c < kNumProhibited; ++c) {
    GlyphSpec g;
    g.class_id = c;
    g.family = prohibited[c];
    g.color = metal;
    g.color_jitter = 0.06f;
    g.size_min = 28.0f;
    g.size_max = 46.0f;
    g.opacity_min = 0.35f;
    g.opacity_max = 0.65f;
    lib.prohibited.push_back(g);
  }
  struct ClutterDef {
    ShapeFamily family;
    std::array<float, 3> color;
    float size_min, size_max;
  };
  const ClutterDef clutter[] = {
      {ShapeFamily::kDisc, {0.2f, 0.35f, 0.78f}, 10.0f, 22.0f},    // coins, metal
      {ShapeFamily::kBox, {0.85f, 0.5f, 0.15f}, 18.0f, 44.0f},     // organic
      {ShapeFamily::kRing, {0.3f, 0.72f, 0.3f}, 14.0f, 34.0f},     // mixed
      {ShapeFamily::kBar, {0.18f, 0.34f, 0.76f}, 24.0f, 56.0f},    // metal rods
      {ShapeFamily::kTriangle, {0.82f, 0.55f, 0.2f}, 16.0f, 40.0f},
      {ShapeFamily::kCable, {0.25f, 0.6f, 0.62f}, 30.0f, 70.0f},
  };
  int id = kNumProhibited;
  for (const auto& d : clutter) {
    GlyphSpec g;
    g.class_id = id++;
    g.family = d.family;
    g.color = d.color;
    g.size_min = d.size_min;
    g.size_max = d.size_max;
    g.opacity_min = 0.25f;
    g.opacity_max = 0.6f;
    lib.clutter.push_back(g);
  }
  return lib;
}

void GlyphLibrary::validate() const {
  if (prohibited.size() != static_cast<std::size_t>(kNumProhibited)) {
    throw ConfigError("glyph library needs exactly one spec per prohibited class");
  }
  for (std::size_t c = 0; c < prohibited.size(); ++c) {
    prohibited[c].validate();
    if (prohibited[c].class_id != static_cast<int>(c)) throw ConfigError("prohibited specs must be in class order");
    for (std::size_t d = 0; d < c; ++d) {
      if (prohibited[d].family == prohibited[c].family) {
        throw ConfigError("prohibited classes must use distinct shape families");
      }
    }
  }
  if (clutter.size() < 5) throw ConfigError("glyph library needs at least 5 clutter families");
  for (const auto& g : clutter) {
    g.validate();
    if (g.prohibited()) throw ConfigError("clutter specs must use class ids >= C'");
  }
}

CompositionMode parse_mode(std::string_view s) {
  if (s == "additive") return CompositionMode::kAdditive;
  if (s == "attenuation") return CompositionMode::kAttenuation;
  throw ConfigError("unknown composition mode: " + std::string(s));
}

std::string_view mode_name(CompositionMode m) {
  return m == CompositionMode::kAdditive ? "additive" : "attenuation";
}

LabelVector Scene::labels() const {
  std::vector<std::uint8_t> v(kNumProhibited, 0);
  for (const auto& item : items) {
    if (item.prohibited()) v[static_cast<std::size_t>(item.class_id)] = 1;
  }
  return LabelVector::prohibited(std::move(v));
}

std::vector<BBox> Scene::prohibited_boxes() const {
  std::vector<BBox> out;
  for (const auto& item : items) {
    if (item.prohibited()) out.push_back(item.bbox);
  }
  return out;
}

Image compose(const Scene& scene) {
  Image out = scene.background;
  if (out.empty() && !scene.items.empty()) {
    out = Image(scene.items.front().sub_image.height, scene.items.front().sub_image.width);
  }
  for (const auto& item : scene.items) {
    if (item.sub_image.height != out.height || item.sub_image.width != out.width) {
      throw DataError("scene item size differs from the canvas");
    }
  }
  if (scene.items.empty()) return out;

  std::vector<float> terms;
  terms.reserve(scene.items.size() + 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    terms.clear();
    for (const auto& item : scene.items) {
      const float v = item.sub_image.data[i];
      if (v != 0.0f) terms.push_back(v);
    }
    if (terms.empty()) {
      out.data[i] = std::clamp(out.data[i], 0.0f, 1.0f);
      continue;
    }
    // Sorting fixes the floating-point reduction order.
    std::sort(terms.begin(), terms.end());
    if (scene.mode == CompositionMode::kAdditive) {
      float acc = out.data[i];
      for (float t : terms) acc += t;
      out.data[i] = std::clamp(acc, 0.0f, 1.0f);
    } else {
      float transmit = 1.0f - std::clamp(out.data[i], 0.0f, 1.0f);
      for (float t : terms) transmit *= 1.0f - std::clamp(t, 0.0f, 1.0f);
      out.data[i] = std::clamp(1.0f - transmit, 0.0f, 1.0f);
    }
  }
  return out;
}

Image make_background(Rng& rng, int height, int width) {
  Image bg(height, width);
  std::array<double, 3> base{};
  for (auto& b : base) b = rng.uniform(0.03, 0.08);
  const auto n_blobs = rng.uniform_int(0, 3);
  struct Blob {
    double cx, cy, inv2s2;
    std::array<double, 3> amp;
  };
  std::vector<Blob> blobs;
  for (std::int64_t b = 0; b < n_blobs; ++b) {
    Blob blob{};
    blob.cx = rng.uniform(0.0, width);
    blob.cy = rng.uniform(0.0, height);
    const double sigma = rng.uniform(8.0, 24.0);
    blob.inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const double a = rng.uniform(0.04, 0.12);
    for (auto& x : blob.amp) x = a * rng.uniform(0.4, 1.0);
    blobs.push_back(blob);
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        double v = base[ch] + 0.015 * rng.normal();
        for (const auto& blob : blobs) {
          const double d2 = (x + 0.5 - blob.cx) * (x + 0.5 - blob.cx) + (y + 0.5 - blob.cy) * (y + 0.5 - blob.cy);
          v += blob.amp[ch] * std::exp(-d2 * blob.inv2s2);
        }
        bg.at(y, x, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return bg;
}

namespace {

constexpr std::uint64_t kPositiveStream = 0x706f73;  // "pos"
constexpr std::uint64_t kNegativeStream = 0x6e6567;  // "neg"

}  // namespace

std::string sample_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%07zu", index);
  return buf;
}

Scene generate_scene(const GlyphLibrary& lib, const GenerateOptions& opts, std::size_t index) {
  const bool positive = index < opts.n_pos;
  const std::size_t local = positive ? index : index - opts.n_pos;
  Rng rng(derive_seed(opts.seed, positive ? kPositiveStream : kNegativeStream, local));

  Scene scene;
  scene.mode = opts.mode;
  scene.background = make_background(rng, opts.canvas, opts.canvas);
  if (positive) {
    const auto n = rng.uniform_int(1, 3);
    for (std::int64_t k = 0; k < n; ++k) {
      const auto c = static_cast<std::size_t>(rng.uniform_int(0, kNumProhibited - 1));
      auto g = render_glyph(lib.prohibited[c], rng, opts.canvas, opts.canvas);
      scene.items.push_back({lib.prohibited[c].class_id, std::move(g.sub_image), g.bbox});
    }
  }
  const auto n_clutter = rng.uniform_int(2, 6);
  for (std::int64_t k = 0; k < n_clutter; ++k) {
    const auto f = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(lib.clutter.size()) - 1));
    auto g = render_glyph(lib.clutter[f], rng, opts.canvas, opts.canvas);
    scene.items.push_back({lib.clutter[f].class_id, std::move(g.sub_image), g.bbox});
  }
  return scene;
}

Sample generate_sample(const GlyphLibrary& lib, const GenerateOptions& opts, std::size_t index) {
  const Scene scene = generate_scene(lib, opts, index);
  Sample s;
  s.sample_id = sample_id_for(index);
  s.image = dequantize(quantize(compose(scene)));
  s.labels = scene.labels();
  s.bboxes = scene.prohibited_boxes();
  return s;
}

Dataset generate_in_memory(const GlyphLibrary& lib, const GenerateOptions& opts) {
  lib.validate();
  Dataset out;
  const std::size_t n = opts.n_pos + opts.n_neg;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Scene scene = generate_scene(lib, opts, i);
    out.push_back({sample_id_for(i), scene.labels(), scene.prohibited_boxes(), quantize(compose(scene))});
  }
  return out;
}

DatasetManifest generate_dataset(const GlyphLibrary& lib, const GenerateOptions& opts,
                                 const std::filesystem::path& out_dir) {
  lib.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.seed = opts.seed;
  manifest.base_dir = out_dir;
  const std::size_t n = opts.n_pos + opts.n_neg;
  for (std::size_t i = 0; i < n; ++i) {
    const Scene scene = generate_scene(lib, opts, i);
    ManifestEntry e;
    e.sample_id = sample_id_for(i);
    e.image = "images/" + e.sample_id + ".png";
    e.labels = scene.labels();
    e.bboxes = scene.prohibited_boxes();
    e.split = "pool";
    try {
      write_png(out_dir / e.image, quantize(compose(scene)));
    } catch (const DataError& err) {
      throw DataError("sample " + e.sample_id + ": " + err.what());
    }
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

void SubsetSpec::validate() const {
  if (ratio < 1) throw ConfigError("subset ratio must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
}

std::size_t train_share(std::size_t n, double train_fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_fraction));
}

std::pair<DatasetManifest, DatasetManifest> build_subsets(const DatasetManifest& pool, const SubsetSpec& spec) {
  spec.validate();
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    (is_positive(pool.entries[i].labels) ? pos : neg).push_back(i);
  }
  const std::size_t need_neg = spec.ratio * spec.positive_count;
  if (pos.size() < spec.positive_count || neg.size() < need_neg) {
    std::string msg = "insufficient pool:";
    if (pos.size() < spec.positive_count) {
      msg += " positives need " + std::to_string(spec.positive_count) + ", have " + std::to_string(pos.size()) +
             " (short by " + std::to_string(spec.positive_count - pos.size()) + ")";
    }
    if (neg.size() < need_neg) {
      msg += " negatives need " + std::to_string(need_neg) + ", have " + std::to_string(neg.size()) +
             " (short by " + std::to_string(need_neg - neg.size()) + ")";
    }
    throw DataError(msg);
  }

  Rng rng(derive_seed(spec.seed, 0x737562 /* "sub" */, 0));
  rng.shuffle(pos);
  rng.shuffle(neg);
  pos.resize(spec.positive_count);
  neg.resize(need_neg);

  std::vector<std::uint8_t> side(pool.entries.size(), 0);  // 0 unused, 1 train, 2 test
  const auto assign = [&](const std::vector<std::size_t>& group) {
    const std::size_t n_train = train_share(group.size(), spec.train_fraction);
    for (std::size_t k = 0; k < group.size(); ++k) side[group[k]] = k < n_train ? 1 : 2;
  };
  assign(pos);
  assign(neg);

  DatasetManifest train;
  DatasetManifest test;
  for (auto* m : {&train, &test}) {
    m->seed = spec.seed;
    m->base_dir = pool.base_dir;
  }
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    if (side[i] == 0) continue;
    ManifestEntry e = pool.entries[i];
    e.split = side[i] == 1 ? "train" : "test";
    (side[i] == 1 ? train : test).entries.push_back(std::move(e));
  }
  return {std::move(train), std::move(test)};
}

}  // namespace chr::synth
