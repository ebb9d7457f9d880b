#include <doctest.h>

#include <cmath>

#include "chr/loss.hpp"
#include "chr/rng.hpp"

using namespace chr;
using namespace chr::loss;

namespace {

LabelVector one_class(std::uint8_t y) { return LabelVector({y}, 1); }

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("positives are never gated out") {
    const auto y = LabelVector::prohibited({1, 1, 1, 1, 1});
    const LevelScores s(3, std::vector<double>(5, 0.01));
    const GateMask g = compute_gates(y, s, 0.3);
    for (const auto& level : g.levels)
      for (auto w : level) CHECK(w == 1);
  }

  TEST_CASE("cascade switches off lower levels") {
    // predictions for class 0 at levels (1, 2, 3) = (0.9, 0.2, 0.9)
    const auto y = LabelVector::prohibited({0, 0, 0, 0, 0});
    LevelScores s(3, std::vector<double>(5, 0.0));
    s[0][0] = 0.9;
    s[1][0] = 0.2;
    s[2][0] = 0.9;
    const GateMask g = compute_gates(y, s, 0.3);
    CHECK(g.levels[2][0] == 1);
    CHECK(g.levels[1][0] == 0);
    CHECK(g.levels[0][0] == 0);
    for (int c = 1; c < 5; ++c)
      for (int l = 0; l < 3; ++l) CHECK(g.levels[l][c] == 0);
  }

  TEST_CASE("unobserved entries carry no weight") {
    const LabelVector y({0, 1, 0, 0, 0, 0}, {1, 1, 1, 1, 0, 1}, 5);
    const LevelScores s(2, std::vector<double>(5, 0.9));
    const GateMask g = compute_gates(y, s, 0.3);
    CHECK(g.levels[0][4] == 0);
    CHECK(g.levels[1][4] == 0);
    CHECK(g.levels[0][0] == 1);
    const GateMask all = all_on_gates(y, 2);
    CHECK(all.levels[0][4] == 0);
    CHECK(all.levels[0][3] == 1);
  }

  TEST_CASE("closed-form loss values") {
    CHECK(chr_loss({one_class(1)}, {{{0.5}}}, {all_on_gates(one_class(1), 1)}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(plain_bce_loss({one_class(0)}, {{{0.5}}}) == doctest::Approx(0.6931).epsilon(1e-4));

    const LevelScores s = {{0.1}, {0.4}};
    const GateMask g = compute_gates(one_class(0), s, 0.3);
    CHECK(g.levels[0][0] == 0);
    CHECK(g.levels[1][0] == 1);
    CHECK(chr_loss({one_class(0)}, {s}, {g}) == doctest::Approx(0.5 * -std::log(0.6)).epsilon(1e-12));
    CHECK(chr_loss({one_class(0)}, {s}, {g}) == doctest::Approx(0.2554).epsilon(1e-4));
  }

  TEST_CASE("perfect predictions give a loss near zero") {
    const auto y = LabelVector::prohibited({1, 0, 1, 0, 0});
    const LevelScores s(3, {1.0, 0.0, 1.0, 0.0, 0.0});
    CHECK(plain_bce_loss({y}, {s}) <= -std::log(1.0 - kProbClamp) * 5 + 1e-15);
  }

  TEST_CASE("BCE symmetry") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
      const double p = rng.uniform(0.01, 0.99);
      CHECK(plain_bce_loss({one_class(1)}, {{{p}}}) == doctest::Approx(plain_bce_loss({one_class(0)}, {{{1.0 - p}}})));
    }
  }

  TEST_CASE("loss does not increase with epsilon") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::uint8_t> v(5);
      for (auto& e : v) e = rng.uniform() < 0.3 ? 1 : 0;
      const auto y = LabelVector::prohibited(v);
      LevelScores s(3, std::vector<double>(5));
      for (auto& level : s)
        for (auto& p : level) p = rng.uniform(0.001, 0.999);
      double prev = INFINITY;
      for (double eps = 0.05; eps < 1.0; eps += 0.05) {
        const double l = chr_loss({y}, {s}, {compute_gates(y, s, eps)});
        CHECK(l <= prev);
        prev = l;
      }
    }
  }

  TEST_CASE("balanced and plain losses agree on all-positive labels") {
    Rng rng(5);
    const auto y = LabelVector::prohibited({1, 1, 1, 1, 1});
    LevelScores s(3, std::vector<double>(5));
    for (auto& level : s)
      for (auto& p : level) p = rng.uniform();
    CHECK(chr_loss({y}, {s}, {compute_gates(y, s, 0.3)}) == plain_bce_loss({y}, {s}));
  }

  TEST_CASE("logit gradient is w * (p - y) / (L * B)") {
    const std::vector<LabelVector> y = {LabelVector::prohibited({1, 0, 0, 0, 0}), LabelVector::prohibited({0, 0, 0, 0, 0})};
    std::vector<LevelScores> z(2, LevelScores(2, std::vector<double>(5, 0.0)));
    z[1][1][2] = 3.0;
    const auto r = loss_from_logits(y, z, LossKind::kBalanced, 0.3);
    CHECK(r.dlogits[0][0][0] == doctest::Approx((0.5 - 1.0) / 4.0));
    CHECK(r.dlogits[1][1][2] == doctest::Approx(sigmoid(3.0) / 4.0));
    CHECK(r.gates[1].levels[0][2] == 1);  // 0.5 > 0.3 at level 1, and level 2 passes too
    const auto plain = loss_from_logits(y, z, LossKind::kPlain, 0.3);
    CHECK(plain.value > 0.0);
    CHECK(plain.value == doctest::Approx(r.value));  // every prediction exceeds epsilon here
  }

  TEST_CASE("sigmoid is stable at extremes") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(800.0) == 1.0);
    CHECK(sigmoid(-800.0) == 0.0);
  }
}
