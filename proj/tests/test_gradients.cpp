#include <doctest.h>

#include <cmath>

#include "chr/model.hpp"
#include "chr/rng.hpp"
#include "test_util.hpp"

using namespace chr;

namespace {

nn::Tensor random_images(int n, int h, int w, Rng& rng) {
  nn::Tensor t(3, n, h, w);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform());
  return t;
}

// Probe J = sum_l sum(r_l .* logits_l), accumulated in double.
double probe(Model& m, const nn::Tensor& x, const std::vector<nn::Matrix>& r) {
  const auto out = m.forward(x, nn::Mode::kTrain, nullptr);
  double j = 0.0;
  for (std::size_t l = 0; l < r.size(); ++l)
    for (std::size_t k = 0; k < r[l].data.size(); ++k) j += static_cast<double>(r[l].data[k]) * out.logits[l].data[k];
  return j;
}

void check_model_gradient(Variant v) {
  Model m(test::tiny_model(v));
  m.init(11);
  Rng rng(5);
  const nn::Tensor x = random_images(3, 16, 16, rng);
  Model::Cache cache;
  m.zero_grad();
  const auto out = m.forward(x, nn::Mode::kTrain, &cache);
  std::vector<nn::Matrix> r;
  for (const auto& lg : out.logits) {
    nn::Matrix q(lg.rows, lg.cols);
    for (auto& e : q.data) e = static_cast<float>(rng.uniform(-1.0, 1.0));
    r.push_back(q);
  }
  m.backward(r, cache);

  double num = 0.0, den = 0.0;
  const float h = 1e-2f;
  for (auto* p : m.parameters()) {
    const std::size_t stride = std::max<std::size_t>(1, p->numel() / 12);
    for (std::size_t k = 0; k < p->numel(); k += stride) {
      const float orig = p->value[k];
      p->value[k] = orig + h;
      const double up = probe(m, x, r);
      p->value[k] = orig - h;
      const double down = probe(m, x, r);
      p->value[k] = orig;
      const double fd = (up - down) / (2.0 * h);
      num += (fd - p->grad[k]) * (fd - p->grad[k]);
      den += fd * fd;
    }
  }
  INFO("variant ", variant_name(v));
  CHECK(std::sqrt(num / den) < 1e-2);
}

}  // namespace

TEST_SUITE("gradients") {
  TEST_CASE("model parameter gradients match finite differences") {
    for (Variant v : kAllVariants) check_model_gradient(v);
  }
}
