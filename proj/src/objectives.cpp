#include "ots/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ots {

namespace {

void check_class(int k, std::size_t num_classes, const char* what) {
  if (k < 0 || static_cast<std::size_t>(k) >= num_classes) {
    throw ContractViolation(std::string(what) + " class index " +
                            std::to_string(k) + " outside [0, " +
                            std::to_string(num_classes) + ")");
  }
}

double max_excluding(const LogitVector& logits, int excluded) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (static_cast<int>(k) != excluded) best = std::max(best, logits[k]);
  }
  return best;
}

double log_sum_exp(const LogitVector& logits) {
  const double m = *std::max_element(logits.values.begin(), logits.values.end());
  double sum = 0.0;
  for (const double v : logits.values) sum += std::exp(v - m);
  return m + std::log(sum);
}

}  // namespace

std::string_view to_string(LossFamily family) {
  switch (family) {
    case LossFamily::kProb: return "prob";
    case LossFamily::kCrossEntropy: return "ce";
    case LossFamily::kMargin: return "margin";
  }
  return "?";
}

LossFamily parse_loss_family(std::string_view text) {
  if (text == "prob") return LossFamily::kProb;
  if (text == "ce") return LossFamily::kCrossEntropy;
  if (text == "margin") return LossFamily::kMargin;
  throw ConfigError("unknown loss family '" + std::string(text) +
                    "' (expected prob, ce or margin)");
}

Objective Objective::untargeted(LossFamily family, int true_class) {
  if (true_class < 0) throw ContractViolation("negative true class");
  return Objective(family, false, true_class);
}

Objective Objective::targeted(LossFamily family, int target, int true_class) {
  if (target < 0) throw ContractViolation("negative target class");
  if (target == true_class) {
    throw ContractViolation("target class " + std::to_string(target) +
                            " equals the true class");
  }
  return Objective(family, true, target);
}

std::string to_string(const Objective& objective) {
  return std::string(objective.is_targeted() ? "targeted-" : "untargeted-") +
         std::string(to_string(objective.family())) + "(" +
         std::to_string(objective.class_index()) + ")";
}

ProbVector softmax(const LogitVector& logits) {
  ProbVector out;
  if (logits.size() == 0) return out;
  const double m = *std::max_element(logits.values.begin(), logits.values.end());
  out.values.resize(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.values[k] = std::exp(logits[k] - m);
    sum += out.values[k];
  }
  for (double& p : out.values) p /= sum;
  return out;
}

double log_prob(const LogitVector& logits, int k) {
  check_class(k, logits.size(), "log_prob");
  return logits[k] - log_sum_exp(logits);
}

double eval_objective(const Objective& objective, const LogitVector& logits) {
  const int c = objective.class_index();
  check_class(c, logits.size(), "objective");
  const bool targeted = objective.is_targeted();
  switch (objective.family()) {
    case LossFamily::kProb: {
      const double p = std::exp(log_prob(logits, c));
      return targeted ? -p : p;
    }
    case LossFamily::kCrossEntropy: {
      const double lp = log_prob(logits, c);
      return targeted ? -lp : lp;
    }
    case LossFamily::kMargin: {
      const double other = max_excluding(logits, c);
      return targeted ? other - logits[c] : logits[c] - other;
    }
  }
  return 0.0;
}

int leading_non_true(std::span<const double> probs, int true_class) {
  if (probs.size() < 2) {
    throw ContractViolation("leading_non_true needs at least two classes");
  }
  int best = -1;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (static_cast<int>(k) == true_class) continue;
    if (best < 0 || probs[k] > probs[best]) best = static_cast<int>(k);
  }
  return best;
}

std::vector<int> class_ranking(const ProbVector& probs, int true_class,
                               int top_k) {
  const int num_classes = static_cast<int>(probs.size());
  if (top_k < 0 || top_k > num_classes - 1) {
    throw ContractViolation("class_ranking: top_k must lie in [0, K-1]");
  }
  std::vector<int> order;
  order.reserve(num_classes - 1);
  for (int k = 0; k < num_classes; ++k) {
    if (k != true_class) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[a] > probs[b]; });
  order.resize(top_k);
  return order;
}

}  // namespace ots
