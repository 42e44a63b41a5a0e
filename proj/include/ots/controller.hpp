#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "ots/core.hpp"
#include "ots/objectives.hpp"

namespace ots {

// Target-selection policies. A run follows exactly one.

struct Untargeted {};

/// Lock onto the leading non-true class once `iteration` steps have run.
struct FixedSwitch {
  std::int64_t iteration = 5;
};

/// Lock once the same non-true class has led for `threshold` consecutive
/// counted steps. Only accepted steps count unless `count_every_step` is set
/// (the literal loop-pass reading).
struct RankStability {
  static constexpr int kNever = std::numeric_limits<int>::max();
  int threshold = 10;
  bool count_every_step = false;
};

/// Targeted from the first step toward a known class.
struct OracleTarget {
  int target = -1;
};

/// Targeted from the first step toward a uniformly drawn non-true class.
struct RandomTarget {
  std::uint64_t seed = 0;
};

/// Targeted from the first step toward the clean image's leading non-true
/// class; the same as FixedSwitch{0}.
struct CleanArgmax {};

using LockPolicy = std::variant<Untargeted, FixedSwitch, RankStability,
                                OracleTarget, RandomTarget, CleanArgmax>;

struct Exploring {
  std::optional<int> candidate;
  int counter = 0;
  bool operator==(const Exploring&) const = default;
};

struct Locked {
  int target = -1;
  std::int64_t iteration = 0;
  bool operator==(const Locked&) const = default;
};

/// Exploring until a lock happens; Locked is terminal.
using LockState = std::variant<Exploring, Locked>;

inline bool is_locked(const LockState& state) {
  return std::holds_alternative<Locked>(state);
}

/// Advances the controller. Called once before the first step with
/// iteration 0, the clean probabilities, and step_accepted = false, then
/// before every later step with the probabilities after the previous step.
/// A Locked state is returned unchanged.
LockState ots_update(const LockState& state, const ProbVector& probs,
                     int true_class, bool step_accepted,
                     std::int64_t iteration, const LockPolicy& policy);

/// Untargeted objective while exploring, targeted toward the locked class
/// afterwards, in the same loss family.
Objective effective_objective(const LockState& state, int true_class,
                              LossFamily family);

/// Named experiment mode; resolved to a LockPolicy per run.
enum class ModeKind {
  kUntargeted,
  kOracle,
  kOtsFixed,
  kOtsStability,
  kRandomTarget,
  kCleanArgmax,
};

struct ModeSpec {
  ModeKind kind = ModeKind::kUntargeted;
  std::int64_t param = 0;  // T for ots-fixed, S for ots-stability

  bool operator==(const ModeSpec&) const = default;
};

/// "untargeted", "oracle", "ots-fixed:5", "ots-stability:10",
/// "random-target", "clean-argmax". Without ":n", ots-fixed uses T = 5 and
/// ots-stability uses `default_stability`.
ModeSpec parse_mode(std::string_view text, int default_stability);
std::string to_string(const ModeSpec& mode);

/// Stability threshold used by the benchmark protocol for an attack name:
/// 10 for SimBA, 8 for Square Attack, 15 for Bandits.
int default_stability_threshold(std::string_view attack);

}  // namespace ots
