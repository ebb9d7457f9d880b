#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "chr/datamodel.hpp"

namespace chr::loss {

enum class LossKind { kPlain, kBalanced };

LossKind parse_loss_kind(std::string_view s);
std::string_view loss_kind_name(LossKind k);

/// Predictions are clamped to [kProbClamp, 1 - kProbClamp] before the log.
inline constexpr double kProbClamp = 1e-7;

/// Per-level class probabilities for one sample: scores[l][c], level 0 finest.
using LevelScores = std::vector<std::vector<double>>;

/// Per-level binary loss weights for one sample; levels[l][c] in {0, 1}.
struct GateMask {
  std::vector<std::vector<std::uint8_t>> levels;
  double epsilon = 0.3;

  friend bool operator==(const GateMask&, const GateMask&) = default;
};

/// Local judgment j(l,c) = 1 for a positive label, else [score > epsilon].
/// The top level keeps its judgment; every lower level ANDs its own with
/// the level above, so a class switched off at some level stays off below.
/// Unobserved label entries are never weighted.
GateMask compute_gates(const LabelVector& y_star, const LevelScores& scores, double epsilon);

/// All-ones gates over observed entries (plain BCE).
GateMask all_on_gates(const LabelVector& y_star, int levels);

/// E_c = -[y*_c log p_c + (1 - y*_c) log(1 - p_c)] over the prohibited classes.
std::vector<double> loss_vector(const LabelVector& y_star, const std::vector<double>& scores);

/// (1/B) sum_n (1/L) sum_l w_n^(l) . E(y*_n, y_n^(l)).
double chr_loss(const std::vector<LabelVector>& y_star, const std::vector<LevelScores>& scores,
                const std::vector<GateMask>& gates);

/// chr_loss with every observed gate on.
double plain_bce_loss(const std::vector<LabelVector>& y_star, const std::vector<LevelScores>& scores);

struct LossResult {
  double value = 0.0;
  /// d value / d logit, same layout as the input logits.
  std::vector<LevelScores> dlogits;
  std::vector<GateMask> gates;
};

/// Loss and logit gradient for a batch of per-level logits. Gates (for
/// kBalanced) come from the detached probabilities of this same forward
/// pass; no gradient flows through them. The gradient of each term is
/// w * (sigmoid(z) - y*) / (L * B).
LossResult loss_from_logits(const std::vector<LabelVector>& y_star, const std::vector<LevelScores>& logits,
                            LossKind kind, double epsilon);

/// Same, with gates supplied by the caller (e.g. frozen for a gradient check).
LossResult loss_from_logits(const std::vector<LabelVector>& y_star, const std::vector<LevelScores>& logits,
                            const std::vector<GateMask>& gates);

double sigmoid(double z);

}  // namespace chr::loss
