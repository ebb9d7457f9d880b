// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "chr/ablation.hpp"
#include "chr/checkpoint.hpp"
#include "chr/evalkit.hpp"
#include "chr/loss.hpp"
#include "chr/synthgen.hpp"
#include "chr/trainer.hpp"
#include "test_util.hpp"

using namespace chr;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// 1. Gate masks over every label vector, a quantized prediction grid and three thresholds.
Outcome gate_masks() {
  const int levels = 3, classes = 5;
  std::vector<double> grid;
  for (int k = 0; k <= 10; ++k) grid.push_back(k / 10.0);
  const int triples = 11 * 11 * 11;
  std::size_t cases = 0, bad = 0;
  for (double eps : {0.1, 0.3, 0.5})
    for (int mask = 0; mask < 32; ++mask) {
      std::vector<std::uint8_t> y(classes);
      for (int c = 0; c < classes; ++c) y[c] = (mask >> c) & 1;
      const LabelVector ls = LabelVector::prohibited(y);
      // Class c takes triple (t + 97c) so every class meets every triple.
      for (int t = 0; t < triples; ++t) {
        loss::LevelScores s(levels, std::vector<double>(classes));
        for (int c = 0; c < classes; ++c) {
          int k = (t + 97 * c) % triples;
          for (int l = 0; l < levels; ++l, k /= 11) s[l][c] = grid[k % 11];
        }
        const loss::GateMask g = loss::compute_gates(ls, s, eps);
        for (int c = 0; c < classes; ++c) {
          ++cases;
          bool ok = true;
          bool above = true;
          for (int l = levels - 1; l >= 0; --l) {
            if (y[c] && g.levels[l][c] != 1) ok = false;
            if (l < levels - 1 && g.levels[l][c] > g.levels[l + 1][c]) ok = false;
            above = above && (y[c] == 1 || s[l][c] > eps);
            if (g.levels[l][c] != (above ? 1 : 0)) ok = false;
          }
          bad += ok ? 0 : 1;
        }
      }
    }
  return {bad == 0, fmt("%zu (labels, class, grid, eps) cases, %zu violations", cases, bad)};
}

// 2. Closed-form loss values and the all-positive identity.
Outcome loss_oracle() {
  std::vector<std::string> fails;
  const LabelVector pos1({1}, 1), neg1({0}, 1);
  {
    const double v = loss::chr_loss({pos1}, {{{0.5}}}, {loss::compute_gates(pos1, {{0.5}}, 0.3)});
    if (std::abs(v - std::log(2.0)) > 1e-6) fails.push_back(fmt("y*=1,p=0.5 gave %.9f", v));
  }
  {
    const loss::LevelScores s{{0.1}, {0.4}};
    const auto g = loss::compute_gates(neg1, s, 0.3);
    const double v = loss::chr_loss({neg1}, {s}, {g});
    if (g.levels[0][0] != 0 || g.levels[1][0] != 1) fails.push_back("gates for (0.1, 0.4) are not (0, 1)");
    if (std::abs(v - 0.5 * -std::log(0.6)) > 1e-6) fails.push_back(fmt("(0.1,0.4) gave %.9f", v));
  }
  {
    const double v = loss::plain_bce_loss({neg1}, {{{0.5}}});
    if (std::abs(v - std::log(2.0)) > 1e-6) fails.push_back(fmt("plain y*=0,p=0.5 gave %.9f", v));
  }
  {
    const LabelVector y = LabelVector::prohibited({0, 0, 0, 0, 0});
    const loss::LevelScores s{{0.9, 0.1, 0.1, 0.1, 0.1}, {0.2, 0.1, 0.1, 0.1, 0.1}, {0.9, 0.1, 0.1, 0.1, 0.1}};
    const auto g = loss::compute_gates(y, s, 0.3);
    if (g.levels[2][0] != 1 || g.levels[1][0] != 0 || g.levels[0][0] != 0)
      fails.push_back("cascade (0.9, 0.2, 0.9) not (0, 0, 1)");
  }
  Rng rng(2);
  int identical = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int batch = 1 + static_cast<int>(rng.uniform_int(0, 3));
    const int levels = 1 + static_cast<int>(rng.uniform_int(0, 3));
    std::vector<LabelVector> y(batch, LabelVector::prohibited({1, 1, 1, 1, 1}));
    std::vector<loss::LevelScores> s(batch, loss::LevelScores(levels, std::vector<double>(5)));
    std::vector<loss::GateMask> g;
    for (auto& sample : s)
      for (auto& level : sample)
        for (double& p : level) p = rng.uniform(0.001, 0.999);
    for (int i = 0; i < batch; ++i) g.push_back(loss::compute_gates(y[i], s[i], rng.uniform(0.05, 0.95)));
    identical += loss::chr_loss(y, s, g) == loss::plain_bce_loss(y, s) ? 1 : 0;
  }
  if (identical != 200) fails.push_back(fmt("all-positive identity held in %d/200", identical));
  std::string d = fails.empty() ? "3 closed forms within 1e-6, all-positive identity exact in 200/200" : "";
  for (const auto& f : fails) d += (d.empty() ? "" : "; ") + f;
  return {fails.empty(), d};
}

// 3. Analytic logit gradients against central differences with frozen gates.
Outcome gradient_check() {
  Rng rng(3);
  const double h = 1e-3;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int batch = 1 + static_cast<int>(rng.uniform_int(0, 3));
    const int levels = 1 + static_cast<int>(rng.uniform_int(0, 2));
    std::vector<LabelVector> y;
    std::vector<loss::LevelScores> z(batch, loss::LevelScores(levels, std::vector<double>(5)));
    for (int i = 0; i < batch; ++i) {
      std::vector<std::uint8_t> v(5);
      for (auto& b : v) b = rng.uniform() < 0.3 ? 1 : 0;
      y.push_back(LabelVector::prohibited(v));
      for (auto& level : z[i])
        for (double& x : level) x = rng.uniform(-4.0, 4.0);
    }
    const double eps = rng.uniform(0.1, 0.5);
    const auto res = loss::loss_from_logits(y, z, loss::LossKind::kBalanced, eps);
    auto value = [&](const std::vector<loss::LevelScores>& logits) {
      std::vector<loss::LevelScores> p = logits;
      for (auto& sample : p)
        for (auto& level : sample)
          for (double& x : level) x = 1.0 / (1.0 + std::exp(-x));
      return loss::chr_loss(y, p, res.gates);
    };
    for (int i = 0; i < batch; ++i)
      for (int l = 0; l < levels; ++l)
        for (int c = 0; c < 5; ++c) {
          auto zp = z, zm = z;
          zp[i][l][c] += h;
          zm[i][l][c] -= h;
          const double fd = (value(zp) - value(zm)) / (2 * h);
          const double an = res.dlogits[i][l][c];
          const double scale = std::max(std::abs(fd), std::abs(an));
          if (scale == 0.0) continue;
          worst = std::max(worst, std::abs(fd - an) / scale);
        }
  }
  return {worst < 1e-3, fmt("max relative error %.3e over 50 instances (limit 1e-3)", worst)};
}

// Brute force: at every rank k, precision and recall are recounted from the top.
double brute_ap(const std::vector<eval::RankedEntry>& input) {
  auto e = input;
  std::sort(e.begin(), e.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.sample_id < b.sample_id;
  });
  const std::size_t n = e.size();
  std::size_t total = 0;
  for (const auto& x : e) total += x.positive;
  auto precision_at = [&](std::size_t k) {
    std::size_t tp = 0;
    for (std::size_t j = 0; j < k; ++j) tp += e[j].positive;
    return static_cast<double>(tp) / static_cast<double>(k);
  };
  auto recall_at = [&](std::size_t k) {
    std::size_t tp = 0;
    for (std::size_t j = 0; j < k; ++j) tp += e[j].positive;
    return static_cast<double>(tp) / static_cast<double>(total);
  };
  double ap = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const double dr = recall_at(k) - recall_at(k - 1);
    if (dr == 0.0) continue;
    double best = 0.0;
    for (std::size_t j = k; j <= n; ++j) best = std::max(best, precision_at(j));
    ap += dr * best;
  }
  return ap;
}

// 4. AP against the brute-force reference, plus the worked example.
Outcome ap_oracle() {
  Rng rng(4);
  double worst = 0.0;
  int compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 15));
    std::vector<eval::RankedEntry> e;
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    rng.shuffle(ids);
    for (int i = 0; i < n; ++i)
      // Coarse scores force ties, resolved by sample id.
      e.push_back({fmt("id%03d", ids[i]), std::round(rng.uniform() * 5) / 5, rng.uniform() < 0.4});
    e[static_cast<std::size_t>(rng.uniform_int(0, n - 1))].positive = true;
    const auto ap = eval::average_precision(e);
    ++compared;
    worst = std::max(worst, ap ? std::abs(*ap - brute_ap(e)) : 1.0);
  }
  const bool undefined_ok = !eval::average_precision({{"a", 0.5, false}, {"b", 0.2, false}}).has_value();
  const auto ex = eval::average_precision({0.9, 0.8, 0.7}, {1, 0, 1});
  const double ex_err = ex ? std::abs(*ex - 5.0 / 6.0) : 1.0;
  return {worst <= 1e-9 && ex_err <= 1e-9 && undefined_ok,
          fmt("max |AP - brute| %.2e over %d instances; worked example %.12f; no positives %s", worst, compared,
              ex ? *ex : -1.0, undefined_ok ? "undefined" : "WRONGLY defined")};
}

// 5. mean(CAM) + bias against the logit, per class and level, random models.
Outcome cam_gap() {
  Rng rng(5);
  double worst = 0.0;
  const Variant variants[] = {Variant::kBaseline, Variant::kH, Variant::kHR, Variant::kCH, Variant::kCHR};
  for (int trial = 0; trial < 100; ++trial) {
    Model model(test::tiny_model(variants[trial % 5]));
    model.init(1000 + trial);
    for (int l = 0; l < model.head().num_levels(); ++l)
      for (auto& b : model.head().classifier(l).fc.bias.value) b = static_cast<float>(rng.uniform(-1.0, 1.0));
    // Nontrivial normalization statistics, as after training.
    for (auto* p : model.buffers())
      for (auto& v : p->value) v = static_cast<float>(p->name.find("var") != std::string::npos ? rng.uniform(0.5, 2.0) : rng.uniform(-0.5, 0.5));
    Image8 img;
    img.height = img.width = 16;
    img.data.resize(16 * 16 * 3);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    const auto out = model.infer(images_to_tensor(std::vector<const Image8*>{&img}));
    for (int l = 0; l < out.refined.size(); ++l)
      for (int c = 0; c < 5; ++c) {
        const nn::MatrixD cam = model.head().cam(out.refined.levels[l], 0, l, c);
        const double mean = std::accumulate(cam.data.begin(), cam.data.end(), 0.0) / static_cast<double>(cam.data.size());
        worst = std::max(worst, std::abs(mean + model.head().classifier(l).bias(c) - out.logits[l](c, 0)));
      }
  }
  return {worst <= 1e-5, fmt("max |mean(CAM) + bias - logit| %.3e over 100 random models (limit 1e-5)", worst)};
}

// 6. Additive composition is order-free and a lone item over a zero background is itself.
Outcome composition() {
  const auto lib = synth::GlyphLibrary::standard();
  synth::GenerateOptions g;
  g.n_pos = 150;
  g.n_neg = 50;
  g.seed = 6;
  Rng rng(6);
  int perm_ok = 0, ident_ok = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    synth::Scene s = synth::generate_scene(lib, g, i);
    const Image ref = synth::compose(s);
    synth::Scene r = s;
    rng.shuffle(r.items);
    std::reverse(s.items.begin(), s.items.end());
    perm_ok += (synth::compose(r) == ref && synth::compose(s) == ref) ? 1 : 0;

    synth::Scene one;
    one.background = Image(ref.height, ref.width);
    one.items = {r.items.empty() ? synth::PlacedItem{} : r.items.front()};
    if (one.items.front().sub_image.empty()) one.items.front().sub_image = Image(ref.height, ref.width);
    ident_ok += synth::compose(one).data == one.items.front().sub_image.data ? 1 : 0;
  }
  return {perm_ok == 200 && ident_ok == 200,
          fmt("permutation invariance %d/200, single-item identity %d/200", perm_ok, ident_ok)};
}

// 7. Subset sizes and the stratified split, checked by counting.
Outcome subsets() {
  struct Case {
    std::size_t pos, ratio, pool_pos, pool_neg;
  };
  const Case cases[] = {{50, 10, 80, 600}, {50, 100, 80, 5200}, {20, 1000, 80, 20100}};
  std::string d;
  bool ok = true;
  for (const auto& k : cases) {
    DatasetManifest pool;
    for (std::size_t i = 0; i < k.pool_pos + k.pool_neg; ++i) {
      ManifestEntry e;
      e.sample_id = fmt("p%07zu", i);
      std::vector<std::uint8_t> y(5, 0);
      if (i < k.pool_pos) y[i % 5] = 1;
      e.labels = LabelVector::prohibited(y);
      e.split = "pool";
      pool.entries.push_back(e);
    }
    synth::SubsetSpec spec;
    spec.ratio = k.ratio;
    spec.positive_count = k.pos;
    spec.seed = 7;
    const auto [train, test] = synth::build_subsets(pool, spec);
    auto count = [](const DatasetManifest& m, bool positive) {
      return static_cast<std::size_t>(std::count_if(m.entries.begin(), m.entries.end(),
                                                    [&](const ManifestEntry& e) { return is_positive(e.labels) == positive; }));
    };
    const std::size_t tp = count(train, true), tn = count(train, false), sp = count(test, true), sn = count(test, false);
    std::set<std::string> ids;
    for (const auto* m : {&train, &test})
      for (const auto& e : m->entries) ids.insert(e.sample_id);
    const std::size_t neg = k.ratio * k.pos;
    const bool c_ok = tp + sp == k.pos && tn + sn == neg && tp * 5 == k.pos * 4 && tn * 5 == neg * 4 &&
                      ids.size() == k.pos + neg;
    ok = ok && c_ok;
    d += fmt("%s(%zu,%zu): train %zu+%zu test %zu+%zu%s", d.empty() ? "" : "; ", k.pos, k.ratio, tp, tn, sp, sn,
             c_ok ? "" : " WRONG");
  }
  return {ok, d};
}

// 8. Desk-scale comparison of CHR against the baseline at ratios 10 and 100.
Outcome desk_direction() {
  AblationSpec spec = desk_spec();
  spec.variants = {Variant::kBaseline, Variant::kCHR};
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset pool = synth::generate_in_memory(synth::GlyphLibrary::standard(), desk_pool_options());
  std::printf("  [8] pool of %zu generated in %.0f s\n", pool.size(),
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  std::fflush(stdout);
  const AblationResult r = run_ablation(spec, pool, [](const AblationCell& c) {
    std::printf("  [8] %s r%zu s%llu mAP %s pointing %s (%.0f s)%s\n", std::string(variant_name(c.variant)).c_str(),
                c.ratio, static_cast<unsigned long long>(c.seed), c.map ? fmt("%.4f", *c.map).c_str() : "n/a",
                c.pointing ? fmt("%.4f", *c.pointing).c_str() : "n/a", c.train_seconds + c.eval_seconds,
                c.ok ? "" : (" FAILED: " + c.error).c_str());
    std::fflush(stdout);
  });
  int wins = 0;
  double gap[2] = {0, 0};
  bool complete = true;
  for (int ri = 0; ri < 2; ++ri) {
    const std::size_t ratio = spec.ratios[ri];
    for (auto seed : spec.seeds) {
      const auto* b = r.find(Variant::kBaseline, ratio, seed);
      const auto* c = r.find(Variant::kCHR, ratio, seed);
      if (!b || !c || !b->map || !c->map) {
        complete = false;
        continue;
      }
      gap[ri] += (*c->map - *b->map) / static_cast<double>(spec.seeds.size());
      if (ratio == 100 && *c->map > *b->map) ++wins;
    }
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {complete && wins >= 2 && gap[1] >= gap[0],
          fmt("CHR beats baseline at ratio 100 in %d/3 seeds; mean gap r10 %+.4f, r100 %+.4f; %.1f min", wins, gap[0],
              gap[1], elapsed / 60.0)};
}

std::vector<std::vector<float>> snapshot(const std::vector<nn::Param*>& ps) {
  std::vector<std::vector<float>> out;
  for (const auto* p : ps) out.push_back(p->value);
  return out;
}

// 9. Resume equals an uninterrupted run; evaluation is byte-stable.
Outcome determinism() {
  test::TempDir dir;
  Rng rng(9);
  const Dataset d = test::tiny_dataset(24, 16, rng);
  const auto v = test::view(d);
  std::string detail;
  bool ok = true;
  for (Variant var : {Variant::kBaseline, Variant::kCHR})
    for (auto kind : {OptimizerKind::kSgdMomentum, OptimizerKind::kAdaptive}) {
      TrainConfig cfg;
      cfg.model = test::tiny_model(var);
      cfg.epochs = 4;
      cfg.batch_size = 8;
      cfg.warmup_epochs = 1;
      cfg.optimizer.kind = kind;
      Trainer full(cfg);
      train(full, v, v);

      Trainer first(cfg);
      TrainOptions o;
      o.checkpoint_path = dir.path / "ck.bin";
      o.stop_after_epoch = 2;
      train(first, v, v, o);
      Trainer second(cfg);
      second.restore(load_checkpoint(dir.path / "ck.bin"));
      train(second, v, v);
      const bool same = snapshot(second.state()) == snapshot(full.state());

      const std::string a = eval::evaluate(full.model(), v).dump(2);
      const std::string b = eval::evaluate(full.model(), v).dump(2);
      Model restored(cfg.model);
      full.save(dir.path / "final.bin");
      restore_tensors(load_checkpoint(dir.path / "final.bin"), restored.state());
      const std::string c = eval::evaluate(restored, v).dump(2);
      const bool stable = a == b && a == c;
      ok = ok && same && stable;
      detail += fmt("%s%s/%s resume %s, report %s", detail.empty() ? "" : "; ", std::string(variant_name(var)).c_str(),
                    std::string(optimizer_name(kind)).c_str(), same ? "bit-exact" : "DIFFERS",
                    stable ? "byte-identical" : "DIFFERS");
    }
  return {ok, detail};
}

// Independent bilinear resize: half-pixel centres, clamped at the edges.
double bilinear_at(const nn::MatrixD& m, int H, int W, int y, int x) {
  auto src = [](int o, int out, int in) {
    const double s = (o + 0.5) * in / out - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };
  const double sy = src(y, H, m.rows), sx = src(x, W, m.cols);
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, m.rows - 1), x1 = std::min(x0 + 1, m.cols - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * m(y0, x0) + fx * m(y0, x1)) + fy * ((1 - fx) * m(y1, x0) + fx * m(y1, x1));
}

eval::PointChoice scan_argmax(const std::vector<nn::MatrixD>& cams, int H, int W) {
  eval::PointChoice best{0, 0, 0, -INFINITY};
  for (int l = 0; l < static_cast<int>(cams.size()); ++l)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double v = bilinear_at(cams[l], H, W, y, x);
        if (v > best.value) best = {l, y, x, v};
      }
  return best;
}

// 10. Constructed CAM fixtures and random maps against a full argmax scan.
Outcome pointing_logic() {
  const int H = 24, W = 24;
  auto flat = [](int n, double v) { return nn::MatrixD(n, n, v); };
  std::vector<std::string> fails;
  const BBox box{4, 4, 10, 10, 2};
  {
    auto cams = std::vector<nn::MatrixD>{flat(12, 0), flat(6, 0), flat(3, 0)};
    cams[0](3, 3) = 5.0;  // upscales to around pixel (6..7, 6..7)
    if (eval::pointing_localize(cams, {box}, 2, H, W) != eval::PointingOutcome::kHit) fails.push_back("peak inside");
    cams[0](3, 3) = 0.0;
    cams[0](10, 10) = 5.0;
    if (eval::pointing_localize(cams, {box}, 2, H, W) != eval::PointingOutcome::kMiss) fails.push_back("peak outside");
  }
  {
    const auto cams = std::vector<nn::MatrixD>{flat(12, 1), flat(6, 1), flat(3, 1)};
    eval::PointChoice p;
    const auto at_origin = eval::pointing_localize(cams, {BBox{0, 0, 3, 3, 2}}, 2, H, W, &p);
    const auto away = eval::pointing_localize(cams, {box}, 2, H, W);
    if (p.level != 0 || p.row != 0 || p.col != 0 || at_origin != eval::PointingOutcome::kHit ||
        away != eval::PointingOutcome::kMiss)
      fails.push_back("constant-map tie-break");
    if (eval::pointing_localize(cams, {BBox{0, 0, 3, 3, 1}}, 2, H, W) != eval::PointingOutcome::kExcluded)
      fails.push_back("no box of the class is not excluded");
  }
  // Every single-peak position on every level, and random quantized maps with ties.
  Rng rng(10);
  int checked = 0, mismatches = 0;
  const int sizes[] = {12, 6, 3};
  for (int l = 0; l < 3; ++l)
    for (int r = 0; r < sizes[l]; ++r)
      for (int c = 0; c < sizes[l]; ++c) {
        std::vector<nn::MatrixD> cams{flat(12, 0), flat(6, 0), flat(3, 0)};
        cams[l](r, c) = 1.0;
        eval::PointChoice p;
        const auto o = eval::pointing_localize(cams, {box}, 2, H, W, &p);
        const auto s = scan_argmax(cams, H, W);
        const bool hit = box.contains(s.col, s.row);
        ++checked;
        if (p.level != s.level || p.row != s.row || p.col != s.col ||
            o != (hit ? eval::PointingOutcome::kHit : eval::PointingOutcome::kMiss))
          ++mismatches;
      }
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<nn::MatrixD> cams{flat(12, 0), flat(6, 0), flat(3, 0)};
    for (auto& m : cams)
      for (double& v : m.data) v = std::round(rng.uniform(0.0, 4.0));
    const BBox b{static_cast<int>(rng.uniform_int(0, 15)), static_cast<int>(rng.uniform_int(0, 15)), 0, 0, 2};
    BBox bb = b;
    bb.x_max = bb.x_min + 1 + static_cast<int>(rng.uniform_int(0, 8));
    bb.y_max = bb.y_min + 1 + static_cast<int>(rng.uniform_int(0, 8));
    eval::PointChoice p;
    const auto o = eval::pointing_localize(cams, {bb}, 2, H, W, &p);
    const auto s = scan_argmax(cams, H, W);
    ++checked;
    if (p.level != s.level || p.row != s.row || p.col != s.col ||
        o != (bb.contains(s.col, s.row) ? eval::PointingOutcome::kHit : eval::PointingOutcome::kMiss))
      ++mismatches;
  }
  if (mismatches) fails.push_back(fmt("%d/%d disagreements with the full scan", mismatches, checked));
  std::string d = fails.empty() ? fmt("fixtures correct; %d maps agree with the full argmax scan", checked) : "";
  for (const auto& f : fails) d += (d.empty() ? "" : "; ") + f;
  return {fails.empty(), d};
}

}  // namespace

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gate-mask correctness", gate_masks},
      {"loss oracle", loss_oracle},
      {"gradient check", gradient_check},
      {"AP oracle equivalence", ap_oracle},
      {"CAM/GAP consistency", cam_gap},
      {"composition algebra", composition},
      {"subset builder exactness", subsets},
      {"desk-scale direction check", desk_direction},
      {"determinism", determinism},
      {"pointing localization logic", pointing_logic},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), s);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
