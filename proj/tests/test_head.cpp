#include <doctest.h>

#include <cmath>

#include "chr/errors.hpp"
#include "chr/head.hpp"
#include "chr/loss.hpp"

using namespace chr;
using namespace chr::nn;

namespace {

Tensor random_tensor(int c, int n, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor t(c, n, h, w);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

std::vector<LevelShape> three_levels(int c1, int c2, int c3) { return {{c1, 8, 8}, {c2, 4, 4}, {c3, 2, 2}}; }

FeaturePyramid random_pyramid(const std::vector<LevelShape>& shapes, int n, Rng& rng) {
  FeaturePyramid p;
  for (const auto& s : shapes) p.levels.push_back(random_tensor(s.channels, n, s.height, s.width, rng));
  return p;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_SUITE("head") {
  TEST_CASE("refinement blocks run top-down: level 2 then level 1") {
    HeadConfig hc;
    hc.width = 6;
    const auto shapes = three_levels(4, 5, 7);
    ChrHead head(hc, shapes);
    Rng rng(1);
    head.init(rng);
    std::vector<int> trace;
    const auto p = random_pyramid(shapes, 2, rng);
    const auto out = head.refine(p, Mode::kEval, nullptr, &trace);
    CHECK(trace == std::vector<int>{2, 1});
    CHECK(head.num_blocks() == 2);
    CHECK(out.levels[2] == p.levels[2]);
    CHECK(out.levels[0].height() == 8);
    CHECK(out.levels[1].height() == 4);
    CHECK(out.levels[0].channels() == 6);
  }

  TEST_CASE("a single-level pyramid is returned unchanged") {
    HeadConfig hc;
    ChrHead head(hc, {{4, 3, 3}});
    Rng rng(2);
    head.init(rng);
    std::vector<int> trace;
    const auto p = random_pyramid({{4, 3, 3}}, 1, rng);
    const auto out = head.refine(p, Mode::kEval, nullptr, &trace);
    CHECK(trace.empty());
    CHECK(out.levels[0] == p.levels[0]);
  }

  TEST_CASE("[I | 0] projections reproduce the input pyramid") {
    HeadConfig hc;
    hc.width = 4;
    hc.normalize = false;
    const auto shapes = three_levels(4, 4, 6);
    ChrHead head(hc, shapes);
    for (int b = 0; b < head.num_blocks(); ++b) {
      auto& w = head.block(b).proj.conv.weight;
      const int in = head.block(b).lower_channels() + head.block(b).upper_channels();
      std::fill(w.value.begin(), w.value.end(), 0.0f);
      for (int o = 0; o < 4; ++o) w.value[static_cast<std::size_t>(o * in + o)] = 1.0f;
    }
    Rng rng(3);
    const auto p = random_pyramid(shapes, 2, rng);  // nonnegative, like post-ReLU features
    const auto out = head.refine(p, Mode::kEval, nullptr);
    for (int l = 0; l < 3; ++l) CHECK(out.levels[l] == p.levels[l]);
    const auto out2 = head.refine_infer(p);
    for (int l = 0; l < 3; ++l) CHECK(out2.levels[l] == p.levels[l]);
  }

  TEST_CASE("mismatched level sizes are rejected naming the level") {
    HeadConfig hc;
    hc.width = 4;
    ChrHead head(hc, {{4, 8, 8}, {4, 3, 3}});
    Rng rng(4);
    head.init(rng);
    FeaturePyramid p{{random_tensor(4, 1, 8, 8, rng), random_tensor(4, 1, 3, 3, rng)}};
    try {
      head.refine_infer(p);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("level 1") != std::string::npos);
    }
  }

  TEST_CASE("fused score is the mean of level probabilities") {
    HeadConfig hc;
    hc.refine = false;
    hc.num_classes = 2;
    const auto shapes = three_levels(3, 3, 3);
    ChrHead head(hc, shapes);
    const double per_level[] = {0.2, 0.4, 0.9};
    for (int l = 0; l < 3; ++l) {
      auto& fc = head.classifier(l).fc;
      std::fill(fc.weight.value.begin(), fc.weight.value.end(), 0.0f);
      fc.bias.value = {static_cast<float>(logit(per_level[l])), 0.0f};
    }
    Rng rng(5);
    const auto out = head.infer(random_pyramid(shapes, 1, rng));
    CHECK(out.fused(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    // zero weights and zero bias give sigmoid(0)
    for (int l = 0; l < 3; ++l) CHECK(out.scores[l](1, 0) == 0.5);
    CHECK(out.fused(1, 0) == 0.5);
  }

  TEST_CASE("fused score lies between the level minimum and maximum") {
    HeadConfig hc;
    hc.width = 5;
    const auto shapes = three_levels(4, 5, 6);
    ChrHead head(hc, shapes);
    Rng rng(6);
    head.init(rng);
    for (int l = 0; l < 3; ++l)
      for (auto& v : head.classifier(l).fc.weight.value) v = static_cast<float>(rng.normal());
    const auto out = head.infer(random_pyramid(shapes, 4, rng));
    for (int c = 0; c < 5; ++c)
      for (int n = 0; n < 4; ++n) {
        double lo = 1.0, hi = 0.0;
        for (const auto& s : out.scores) {
          lo = std::min(lo, s(c, n));
          hi = std::max(hi, s(c, n));
          CHECK(s(c, n) > 0.0);
          CHECK(s(c, n) < 1.0);
        }
        CHECK(out.fused(c, n) >= lo);
        CHECK(out.fused(c, n) <= hi);
      }
  }

  TEST_CASE("CAM with a basis weight row selects a channel") {
    HeadConfig hc;
    hc.refine = false;
    const auto shapes = three_levels(4, 4, 4);
    ChrHead head(hc, shapes);
    auto& fc = head.classifier(1).fc;
    std::fill(fc.weight.value.begin(), fc.weight.value.end(), 0.0f);
    fc.weight.value[2 * 4 + 3] = 1.0f;  // class 2 reads channel 3
    Rng rng(7);
    const Tensor x = random_tensor(4, 2, 4, 4, rng);
    const MatrixD cam = head.cam(x, 1, 1, 2);
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx) CHECK(cam(y, xx) == x.at(1, 3, y, xx));
    const MatrixD zero = head.cam(Tensor(4, 1, 4, 4), 0, 1, 2);
    for (double v : zero.data) CHECK(v == 0.0);
    CHECK_THROWS_AS(head.cam(x, 0, 1, 5), ConfigError);
  }

  TEST_CASE("constant features give a constant CAM whose mean is logit minus bias") {
    HeadConfig hc;
    hc.refine = false;
    const auto shapes = three_levels(3, 3, 3);
    ChrHead head(hc, shapes);
    Rng rng(8);
    head.init(rng);
    FeaturePyramid p;
    for (const auto& s : shapes) p.levels.emplace_back(s.channels, 1, s.height, s.width, 0.75f);
    const auto out = head.infer(p);
    for (int l = 0; l < 3; ++l)
      for (int c = 0; c < 5; ++c) {
        const MatrixD cam = head.cam(out.refined.levels[l], 0, l, c);
        double sum = 0.0;
        for (double v : cam.data) {
          CHECK(v == cam.data[0]);
          sum += v;
        }
        const double mean = sum / static_cast<double>(cam.data.size());
        CHECK(mean == doctest::Approx(out.logits[l](c, 0) - head.classifier(l).bias(c)).epsilon(1e-6));
      }
  }
}
