#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "chr/evalkit.hpp"
#include "chr/rng.hpp"
#include "test_util.hpp"

using namespace chr;
using namespace chr::eval;
using nn::MatrixD;

using test::tiny_dataset;
using test::tiny_model;

TEST_SUITE("evalkit") {
  TEST_CASE("worked AP example") {
    const auto ap = average_precision({0.9, 0.8, 0.7}, {1, 0, 1});
    REQUIRE(ap);
    CHECK(std::abs(*ap - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12);
  }

  TEST_CASE("perfect ranking gives AP 1 and no positives gives nothing") {
    CHECK(*average_precision({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0}) == 1.0);
    CHECK_FALSE(average_precision({0.9, 0.8}, {0, 0}).has_value());
  }

  TEST_CASE("ties are ordered by sample id") {
    // Same scores; the positive's id sorts after the negative's.
    const auto late = average_precision({{"b", 0.5, true}, {"a", 0.5, false}});
    const auto early = average_precision({{"a", 0.5, true}, {"b", 0.5, false}});
    CHECK(*late == doctest::Approx(0.5));
    CHECK(*early == 1.0);
  }

  TEST_CASE("AP is invariant under increasing score transforms") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
      const int n = static_cast<int>(rng.uniform_int(2, 20));
      std::vector<double> s(n), s2(n);
      std::vector<int> y(n);
      for (int i = 0; i < n; ++i) {
        s[i] = std::round(rng.uniform() * 8.0) / 8.0;
        s2[i] = std::exp(3.0 * s[i]) - 7.0;
        y[i] = rng.uniform() < 0.4;
      }
      y[0] = 1;
      CHECK(*average_precision(s, y) == *average_precision(s2, y));
    }
  }

  TEST_CASE("mean of defined values skips undefined ones") {
    CHECK(*mean_defined({0.5, std::nullopt, 1.0}) == 0.75);
    CHECK_FALSE(mean_defined({std::nullopt}).has_value());
  }

  TEST_CASE("bilinear upscale keeps constants and interpolates at half-pixel centres") {
    MatrixD c(3, 3, 2.5);
    for (double v : upscale_bilinear(c, 12, 12).data) CHECK(v == 2.5);
    MatrixD m(1, 2);
    m(0, 0) = 0.0;
    m(0, 1) = 4.0;
    const MatrixD up = upscale_bilinear(m, 1, 4);
    CHECK(up(0, 0) == 0.0);
    CHECK(up(0, 1) == 1.0);
    CHECK(up(0, 2) == 3.0);
    CHECK(up(0, 3) == 4.0);
    const MatrixD same = upscale_bilinear(m, 1, 2);
    CHECK(same == m);
  }

  TEST_CASE("pointing fixtures") {
    const std::vector<BBox> boxes = {{4, 4, 8, 8, 1}};
    SUBCASE("peak inside the box is a hit") {
      MatrixD a(16, 16, 0.0);
      a(5, 6) = 10.0;
      PointChoice p;
      CHECK(pointing_localize({a}, boxes, 1, 16, 16, &p) == PointingOutcome::kHit);
      CHECK(p.row == 5);
      CHECK(p.col == 6);
    }
    SUBCASE("peak outside the box is a miss") {
      MatrixD a(16, 16, 0.0);
      a(12, 1) = 10.0;
      CHECK(pointing_localize({a}, boxes, 1, 16, 16) == PointingOutcome::kMiss);
    }
    SUBCASE("constant maps pick level 1 at (0,0)") {
      const std::vector<MatrixD> cams = {MatrixD(16, 16, 1.0), MatrixD(8, 8, 1.0)};
      PointChoice p;
      CHECK(pointing_localize(cams, boxes, 1, 16, 16, &p) == PointingOutcome::kMiss);
      CHECK(p.level == 0);
      CHECK(p.row == 0);
      CHECK(p.col == 0);
      CHECK(pointing_localize(cams, {{0, 0, 2, 2, 1}}, 1, 16, 16) == PointingOutcome::kHit);
    }
    SUBCASE("no box of the class excludes the sample") {
      CHECK(pointing_localize({MatrixD(16, 16, 0.0)}, boxes, 2, 16, 16) == PointingOutcome::kExcluded);
    }
    SUBCASE("a stronger coarse level wins") {
      MatrixD fine(16, 16, 0.0);
      fine(1, 1) = 3.0;
      MatrixD coarse(4, 4, 0.0);
      coarse(1, 1) = 8.0;
      PointChoice p;
      CHECK(pointing_localize({fine, coarse}, boxes, 1, 16, 16, &p) == PointingOutcome::kHit);
      CHECK(p.level == 1);
      const MatrixD up = upscale_bilinear(coarse, 16, 16);
      CHECK(p.value == *std::max_element(up.data.begin(), up.data.end()));
    }
  }

  TEST_CASE("pointing accuracy is hits over hits plus misses") {
    PointingStats s{3, 1, 5};
    CHECK(*s.accuracy() == 0.75);
    CHECK_FALSE(PointingStats{}.accuracy().has_value());
  }

  TEST_CASE("evaluation report schema, means and determinism") {
    Rng rng(9);
    Model model(tiny_model());
    model.init(4);
    const Dataset d = tiny_dataset(30, 16, rng);
    std::vector<const DatasetItem*> items;
    for (const auto& it : d) items.push_back(&it);
    EvalOptions eo;
    eo.batch_size = 7;
    const auto report = evaluate(model, items, eo);
    CHECK(report.dump() == evaluate(model, items).dump());

    const auto& classes = report["classes"];
    REQUIRE(classes.size() == 5);
    std::vector<std::string> keys;
    for (auto it = classes.begin(); it != classes.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"gun", "knife", "wrench", "pliers", "scissors"});

    double ap_sum = 0.0, acc_sum = 0.0;
    int ap_n = 0, acc_n = 0;
    for (const auto& [name, c] : classes.items()) {
      if (c["ap"].is_number()) {
        ap_sum += c["ap"].get<double>();
        ++ap_n;
      }
      const auto& p = c["pointing"];
      if (p["accuracy"].is_number()) {
        const double acc = p["accuracy"].get<double>();
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
        CHECK(p["hits"].get<int>() + p["misses"].get<int>() == c["num_positive"].get<int>());
        acc_sum += acc;
        ++acc_n;
      }
    }
    CHECK(std::abs(report["mAP"].get<double>() - ap_sum / ap_n) <= 1e-12);
    CHECK(std::abs(report["mean_pointing_accuracy"].get<double>() - acc_sum / acc_n) <= 1e-12);
    CHECK(report["per_level"].size() == 3);
  }

  TEST_CASE("localization is omitted without boxes and undefined classes warn") {
    Rng rng(10);
    Model model(tiny_model());
    model.init(4);
    Dataset d = tiny_dataset(6, 16, rng);
    for (auto& it : d) {
      it.bboxes.clear();
      it.labels = LabelVector::prohibited({static_cast<std::uint8_t>(it.sample_id == "t1001"), 0, 0, 0, 0});
    }
    std::vector<const DatasetItem*> items;
    for (const auto& it : d) items.push_back(&it);
    const auto report = evaluate(model, items);
    CHECK_FALSE(report.contains("mean_pointing_accuracy"));
    CHECK_FALSE(report["classes"]["gun"].contains("pointing"));
    CHECK(report["classes"]["knife"]["ap"].is_null());
    CHECK(report["warnings"].size() == 4);
    CHECK(report["mAP"].get<double>() == report["classes"]["gun"]["ap"].get<double>());
  }
}
