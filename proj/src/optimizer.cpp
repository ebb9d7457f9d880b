#include "chr/optimizer.hpp"

#include <cmath>
#include <string>

#include "chr/errors.hpp"

namespace chr {

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd-momentum") return OptimizerKind::kSgdMomentum;
  if (s == "adaptive") return OptimizerKind::kAdaptive;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected sgd-momentum or adaptive)");
}

std::string_view optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::kSgdMomentum ? "sgd-momentum" : "adaptive";
}

Optimizer::Optimizer(const OptimizerConfig& config, std::vector<nn::Param*> params)
    : config_(config), params_(std::move(params)) {
  for (auto* p : params_) {
    first_.emplace_back("optim/" + p->name + ".m", p->shape, false);
    if (config_.kind == OptimizerKind::kAdaptive) second_.emplace_back("optim/" + p->name + ".v", p->shape, false);
  }
}

void Optimizer::step(double lr) {
  ++steps_;
  const bool adam = config_.kind == OptimizerKind::kAdaptive;
  const double bc1 = adam ? 1.0 - std::pow(config_.beta1, static_cast<double>(steps_)) : 1.0;
  const double bc2 = adam ? 1.0 - std::pow(config_.beta2, static_cast<double>(steps_)) : 1.0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nn::Param& p = *params_[i];
    auto& m = first_[i].value;
    const float wd = p.decay ? static_cast<float>(config_.weight_decay) : 0.0f;
    if (!adam) {
      const auto mu = static_cast<float>(config_.momentum);
      const auto step = static_cast<float>(lr);
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const float g = p.grad[k] + wd * p.value[k];
        m[k] = mu * m[k] + g;
        p.value[k] -= step * m[k];
      }
    } else {
      auto& v = second_[i].value;
      const auto b1 = static_cast<float>(config_.beta1);
      const auto b2 = static_cast<float>(config_.beta2);
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const float g = p.grad[k] + wd * p.value[k];
        m[k] = b1 * m[k] + (1.0f - b1) * g;
        v[k] = b2 * v[k] + (1.0f - b2) * g * g;
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        p.value[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + config_.adam_eps));
      }
    }
  }
}

std::vector<nn::Param*> Optimizer::state() {
  std::vector<nn::Param*> out;
  for (auto& p : first_) out.push_back(&p);
  for (auto& p : second_) out.push_back(&p);
  return out;
}

}  // namespace chr
