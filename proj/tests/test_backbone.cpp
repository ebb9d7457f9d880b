#include <doctest.h>

#include <cmath>

#include "chr/backbone.hpp"
#include "chr/errors.hpp"

using namespace chr;
using namespace chr::nn;

namespace {

Tensor random_tensor(int c, int n, int h, int w, Rng& rng) {
  Tensor t(c, n, h, w);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
  return t;
}

BackboneConfig small_config() {
  BackboneConfig c;
  c.input_height = c.input_width = 8;
  c.stem_channels = 4;
  c.stem_stride = 1;
  c.stage_channels = {4, 6, 8};
  c.stage_blocks = {1, 2, 1};
  c.taps = {1, 2};
  return c;
}

void randomize_running_stats(Backbone& b, Rng& rng) {
  for (Param* p : b.buffers()) {
    const bool var = p->name.find("running_var") != std::string::npos;
    for (auto& v : p->value) v = static_cast<float>(var ? rng.uniform(0.5, 1.5) : rng.uniform(-0.2, 0.2));
  }
  for (Param* p : b.parameters()) {
    if (p->name.find(".bn.") == std::string::npos) continue;
    const bool gamma = p->name.find("gamma") != std::string::npos;
    for (auto& v : p->value) v = static_cast<float>(gamma ? rng.uniform(0.5, 1.5) : rng.uniform(-0.1, 0.3));
  }
}

}  // namespace

TEST_SUITE("backbone") {
  TEST_CASE("default config: 96x96 input gives 12x12, 6x6, 3x3 taps") {
    BackboneConfig c;
    Backbone b(c);
    Rng rng(1);
    b.init(rng);
    const auto p = b.infer(random_tensor(3, 2, 96, 96, rng));
    REQUIRE(p.size() == 3);
    const int expected[] = {12, 6, 3};
    const auto shapes = c.level_shapes();
    for (int l = 0; l < 3; ++l) {
      CHECK(p.levels[l].height() == expected[l]);
      CHECK(p.levels[l].width() == expected[l]);
      CHECK(p.levels[l].channels() == shapes[l].channels);
      CHECK(shapes[l].height == expected[l]);
    }
  }

  TEST_CASE("zero image gives an all-zero pyramid") {
    Backbone b(BackboneConfig{});
    Rng rng(2);
    b.init(rng);
    const auto p = b.infer(Tensor(3, 1, 96, 96));
    for (const auto& level : p.levels)
      for (float v : level.values()) CHECK(v == 0.0f);
  }

  TEST_CASE("evaluation outputs are independent of batch composition") {
    Backbone b(BackboneConfig{});
    Rng rng(3);
    b.init(rng);
    randomize_running_stats(b, rng);
    const Tensor batch = random_tensor(3, 4, 96, 96, rng);
    const auto together = b.infer(batch);
    for (int n = 0; n < 4; ++n) {
      const auto alone = b.infer(batch.slice_batch(n, 1));
      for (std::size_t l = 0; l < alone.levels.size(); ++l) {
        const Tensor part = together.levels[l].slice_batch(n, 1);
        double worst = 0.0;
        for (std::size_t i = 0; i < part.size(); ++i)
          worst = std::max(worst, static_cast<double>(std::abs(part.values()[i] - alone.levels[l].values()[i])));
        CHECK(worst <= 1e-5);
      }
    }
  }

  TEST_CASE("parameter count follows the closed form") {
    for (const BackboneConfig& c : {BackboneConfig{}, small_config()}) {
      Backbone b(c);
      std::size_t counted = 0;
      for (Param* p : b.parameters()) counted += p->numel();
      // Every block: 3x3 conv weights plus a scale and shift per output channel.
      std::size_t closed = 27 * c.stem_channels + 2 * c.stem_channels;
      int in = c.stem_channels;
      for (std::size_t s = 0; s < c.stage_channels.size(); ++s) {
        const int out = c.stage_channels[s];
        closed += 9 * in * out + 2 * out;
        closed += (c.stage_blocks[s] - 1) * (9 * out * out + 2 * out);
        in = out;
      }
      CHECK(counted == closed);
      CHECK(c.parameter_count() == closed);
    }
  }

  TEST_CASE("input gradient matches finite differences on 8x8 inputs") {
    const BackboneConfig c = small_config();
    Backbone b(c);
    Rng rng(4);
    b.init(rng);
    randomize_running_stats(b, rng);
    Tensor x = random_tensor(3, 1, 8, 8, rng);

    // Probe: sum of the top-level features.
    auto probe = [&](const Tensor& in) {
      const auto p = b.forward(in, Mode::kEval, nullptr);
      double s = 0.0;
      for (float v : p.levels.back().values()) s += v;
      return s;
    };
    Backbone::Cache cache;
    const auto p = b.forward(x, Mode::kEval, &cache);
    std::vector<Tensor> grads(p.levels.size());
    grads.back() = Tensor(p.levels.back().channels(), 1, p.levels.back().height(), p.levels.back().width(), 1.0f);
    const Tensor dx = b.backward(grads, cache, true);

    double num = 0.0, den = 0.0;
    const float h = 1e-2f;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float orig = x.values()[i];
      x.values()[i] = orig + h;
      const double up = probe(x);
      x.values()[i] = orig - h;
      const double down = probe(x);
      x.values()[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      num += (fd - dx.values()[i]) * (fd - dx.values()[i]);
      den += fd * fd;
    }
    REQUIRE(den > 0.0);
    CHECK(std::sqrt(num / den) < 1e-3);
  }

  TEST_CASE("config validation") {
    BackboneConfig c;
    c.taps = {3};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.taps = {2, 1};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = BackboneConfig{};
    c.stage_blocks = {1, 1};
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("wrong input size is rejected before computing") {
    Backbone b(BackboneConfig{});
    CHECK_THROWS_AS(b.infer(Tensor(3, 1, 64, 64)), ConfigError);
    CHECK_THROWS_AS(b.infer(Tensor(1, 1, 96, 96)), ConfigError);
  }
}
