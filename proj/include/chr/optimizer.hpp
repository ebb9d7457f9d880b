#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "chr/layers.hpp"

namespace chr {

enum class OptimizerKind { kSgdMomentum, kAdaptive };

OptimizerKind parse_optimizer(std::string_view s);
std::string_view optimizer_name(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double momentum = 0.9;
  double weight_decay = 1e-4;  // L2, only on params flagged `decay`
  double beta1 = 0.9;          // adaptive (Adam) moments
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

/// Momentum SGD (v = mu v + g; w -= lr v) or Adam. State is per parameter
/// and exported as named arrays for checkpoints.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::vector<nn::Param*> params);

  void step(double lr);
  std::int64_t steps() const { return steps_; }

  /// State arrays named "optim/<param>.m" (and ".v" for Adam).
  std::vector<nn::Param*> state();
  void set_steps(std::int64_t s) { steps_ = s; }

 private:
  OptimizerConfig config_;
  std::vector<nn::Param*> params_;
  std::vector<nn::Param> first_;
  std::vector<nn::Param> second_;
  std::int64_t steps_ = 0;
};

}  // namespace chr
