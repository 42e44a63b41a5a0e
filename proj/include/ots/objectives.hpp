#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ots/core.hpp"

namespace ots {

enum class LossFamily { kProb, kCrossEntropy, kMargin };

std::string_view to_string(LossFamily family);
LossFamily parse_loss_family(std::string_view text);

/// A loss the attacker minimizes. Untargeted variants refer to the true class
/// y, targeted variants to the target class t.
///
///   UntargetedProb    P(y)
///   UntargetedCE      log P(y)
///   UntargetedMargin  f_y - max_{k != y} f_k
///   TargetedProb      -P(t)
///   TargetedCE        -log P(t)
///   TargetedMargin    max_{k != t} f_k - f_t
class Objective {
 public:
  static Objective untargeted(LossFamily family, int true_class);
  /// Throws ContractViolation when target == true_class.
  static Objective targeted(LossFamily family, int target, int true_class);

  LossFamily family() const { return family_; }
  bool is_targeted() const { return targeted_; }
  int class_index() const { return class_; }

  bool operator==(const Objective&) const = default;

 private:
  Objective(LossFamily family, bool targeted, int cls)
      : family_(family), targeted_(targeted), class_(cls) {}

  LossFamily family_;
  bool targeted_;
  int class_;
};

std::string to_string(const Objective& objective);

/// Max-subtracted softmax.
ProbVector softmax(const LogitVector& logits);

/// log-softmax entry k, computed without forming probabilities.
double log_prob(const LogitVector& logits, int k);

/// Lower is better for the attacker.
double eval_objective(const Objective& objective, const LogitVector& logits);

/// argmax_{k != y} probs[k], lowest index on ties.
int leading_non_true(std::span<const double> probs, int true_class);
inline int leading_non_true(const ProbVector& probs, int true_class) {
  return leading_non_true(std::span<const double>(probs.values), true_class);
}

/// Non-true classes by descending probability (stable by index), first top_k.
std::vector<int> class_ranking(const ProbVector& probs, int true_class,
                               int top_k);

}  // namespace ots
