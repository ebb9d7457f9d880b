#include "chr/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "chr/errors.hpp"

namespace chr::loss {

LossKind parse_loss_kind(std::string_view s) {
  if (s == "plain") return LossKind::kPlain;
  if (s == "balanced") return LossKind::kBalanced;
  throw ConfigError("unknown loss kind: " + std::string(s));
}

std::string_view loss_kind_name(LossKind k) { return k == LossKind::kPlain ? "plain" : "balanced"; }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

int classes_of(const LabelVector& y) { return y.prohibited_count(); }

void check_shapes(const LabelVector& y, const LevelScores& s) {
  for (const auto& level : s) {
    if (static_cast<int>(level.size()) != classes_of(y)) {
      throw ConfigError("loss: expected " + std::to_string(classes_of(y)) + " scores per level, got " +
                        std::to_string(level.size()));
    }
  }
}

}  // namespace

GateMask compute_gates(const LabelVector& y_star, const LevelScores& scores, double epsilon) {
  check_shapes(y_star, scores);
  const int levels = static_cast<int>(scores.size());
  const int classes = classes_of(y_star);
  GateMask g;
  g.epsilon = epsilon;
  g.levels.assign(static_cast<std::size_t>(levels), std::vector<std::uint8_t>(static_cast<std::size_t>(classes), 0));
  for (int c = 0; c < classes; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (!y_star.observed(c)) continue;
    bool above = true;
    for (int l = levels - 1; l >= 0; --l) {
      const auto li = static_cast<std::size_t>(l);
      const bool local = y_star.value(c) == 1 || scores[li][ci] > epsilon;
      above = above && local;
      g.levels[li][ci] = above ? 1 : 0;
    }
  }
  return g;
}

GateMask all_on_gates(const LabelVector& y_star, int levels) {
  const int classes = classes_of(y_star);
  GateMask g;
  g.epsilon = 0.0;
  g.levels.assign(static_cast<std::size_t>(levels), std::vector<std::uint8_t>(static_cast<std::size_t>(classes), 0));
  for (auto& level : g.levels) {
    for (int c = 0; c < classes; ++c) level[static_cast<std::size_t>(c)] = y_star.observed(c) ? 1 : 0;
  }
  return g;
}

std::vector<double> loss_vector(const LabelVector& y_star, const std::vector<double>& scores) {
  const int classes = classes_of(y_star);
  if (static_cast<int>(scores.size()) != classes) throw ConfigError("loss_vector: size mismatch");
  std::vector<double> e(static_cast<std::size_t>(classes), 0.0);
  for (int c = 0; c < classes; ++c) {
    const double p = std::clamp(scores[static_cast<std::size_t>(c)], kProbClamp, 1.0 - kProbClamp);
    e[static_cast<std::size_t>(c)] = y_star.value(c) == 1 ? -std::log(p) : -std::log(1.0 - p);
  }
  return e;
}

double chr_loss(const std::vector<LabelVector>& y_star, const std::vector<LevelScores>& scores,
                const std::vector<GateMask>& gates) {
  if (y_star.empty() || y_star.size() != scores.size() || y_star.size() != gates.size()) {
    throw ConfigError("chr_loss: batch sizes disagree or batch is empty");
  }
  double total = 0.0;
  for (std::size_t n = 0; n < y_star.size(); ++n) {
    check_shapes(y_star[n], scores[n]);
    const auto levels = scores[n].size();
    if (gates[n].levels.size() != levels) throw ConfigError("chr_loss: gate level count mismatch");
    double sample = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
      const auto e = loss_vector(y_star[n], scores[n][l]);
      for (std::size_t c = 0; c < e.size(); ++c) sample += gates[n].levels[l][c] * e[c];
    }
    total += sample / static_cast<double>(levels);
  }
  return total / static_cast<double>(y_star.size());
}

double plain_bce_loss(const std::vector<LabelVector>& y_star, const std::vector<LevelScores>& scores) {
  std::vector<GateMask> gates;
  gates.reserve(y_star.size());
  for (std::size_t n = 0; n < y_star.size(); ++n) {
    gates.push_back(all_on_gates(y_star[n], static_cast<int>(n < scores.size() ? scores[n].size() : 0)));
  }
  return chr_loss(y_star, scores, gates);
}

LossResult loss_from_logits(const std::vector<LabelVector>& y_star, const std::vector<LevelScores>& logits,
                            const std::vector<GateMask>& gates) {
  if (y_star.empty() || y_star.size() != logits.size() || gates.size() != logits.size()) {
    throw ConfigError("loss: batch sizes disagree or batch is empty");
  }
  std::vector<LevelScores> probs(logits.size());
  for (std::size_t n = 0; n < logits.size(); ++n) {
    probs[n] = logits[n];
    for (auto& level : probs[n]) {
      for (double& z : level) z = sigmoid(z);
    }
  }
  LossResult r;
  r.gates = gates;
  r.value = chr_loss(y_star, probs, gates);
  const double batch = static_cast<double>(logits.size());
  r.dlogits.resize(logits.size());
  for (std::size_t n = 0; n < logits.size(); ++n) {
    const double levels = static_cast<double>(logits[n].size());
    r.dlogits[n] = probs[n];
    for (std::size_t l = 0; l < probs[n].size(); ++l) {
      for (std::size_t c = 0; c < probs[n][l].size(); ++c) {
        const double y = y_star[n].value(static_cast<int>(c));
        r.dlogits[n][l][c] = gates[n].levels[l][c] * (probs[n][l][c] - y) / (levels * batch);
      }
    }
  }
  return r;
}

LossResult loss_from_logits(const std::vector<LabelVector>& y_star, const std::vector<LevelScores>& logits,
                            LossKind kind, double epsilon) {
  if (y_star.size() != logits.size()) throw ConfigError("loss: batch sizes disagree");
  std::vector<GateMask> gates;
  gates.reserve(logits.size());
  for (std::size_t n = 0; n < logits.size(); ++n) {
    if (kind == LossKind::kPlain) {
      gates.push_back(all_on_gates(y_star[n], static_cast<int>(logits[n].size())));
    } else {
      LevelScores p = logits[n];
      for (auto& level : p) {
        for (double& z : level) z = sigmoid(z);
      }
      gates.push_back(compute_gates(y_star[n], p, epsilon));
    }
  }
  return loss_from_logits(y_star, logits, gates);
}

}  // namespace chr::loss
