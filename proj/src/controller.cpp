#include "ots/controller.hpp"

#include <charconv>
#include <string>

#include "ots/rng.hpp"

namespace ots {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

int draw_random_target(std::uint64_t seed, int true_class, int num_classes) {
  RngStream rng = fresh_rng(seed, "random-target");
  const auto pick = static_cast<int>(rng.uniform_index(num_classes - 1));
  return pick < true_class ? pick : pick + 1;
}

}  // namespace

LockState ots_update(const LockState& state, const ProbVector& probs,
                     int true_class, bool step_accepted,
                     std::int64_t iteration, const LockPolicy& policy) {
  if (is_locked(state)) return state;
  const auto& exploring = std::get<Exploring>(state);
  const int num_classes = static_cast<int>(probs.size());

  return std::visit(
      Overloaded{
          [&](const Untargeted&) -> LockState { return exploring; },
          [&](const FixedSwitch& p) -> LockState {
            if (iteration >= p.iteration) {
              return Locked{leading_non_true(probs, true_class), iteration};
            }
            return exploring;
          },
          [&](const CleanArgmax&) -> LockState {
            return Locked{leading_non_true(probs, true_class), iteration};
          },
          [&](const OracleTarget& p) -> LockState {
            if (p.target < 0 || p.target >= num_classes ||
                p.target == true_class) {
              throw ContractViolation("oracle target " +
                                      std::to_string(p.target) +
                                      " is not a valid non-true class");
            }
            return Locked{p.target, iteration};
          },
          [&](const RandomTarget& p) -> LockState {
            return Locked{draw_random_target(p.seed, true_class, num_classes),
                          iteration};
          },
          [&](const RankStability& p) -> LockState {
            if (iteration == 0) return exploring;  // no step has run yet
            if (!step_accepted && !p.count_every_step) return exploring;
            const int leader = leading_non_true(probs, true_class);
            Exploring next = exploring;
            if (next.candidate == leader) {
              ++next.counter;
            } else {
              next.candidate = leader;
              next.counter = 1;
            }
            if (next.counter >= p.threshold) return Locked{leader, iteration};
            return next;
          },
      },
      policy);
}

Objective effective_objective(const LockState& state, int true_class,
                              LossFamily family) {
  if (const auto* locked = std::get_if<Locked>(&state)) {
    return Objective::targeted(family, locked->target, true_class);
  }
  return Objective::untargeted(family, true_class);
}

ModeSpec parse_mode(std::string_view text, int default_stability) {
  std::string_view name = text;
  std::optional<std::int64_t> param;
  if (const auto colon = text.find(':'); colon != std::string_view::npos) {
    name = text.substr(0, colon);
    const auto digits = text.substr(colon + 1);
    std::int64_t value = 0;
    const auto [end, ec] =
        std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc() || end != digits.data() + digits.size() || value < 0) {
      throw ConfigError("bad mode parameter in '" + std::string(text) + "'");
    }
    param = value;
  }
  const auto no_param = [&](ModeKind kind) {
    if (param) {
      throw ConfigError("mode '" + std::string(name) + "' takes no parameter");
    }
    return ModeSpec{kind, 0};
  };
  if (name == "untargeted") return no_param(ModeKind::kUntargeted);
  if (name == "oracle") return no_param(ModeKind::kOracle);
  if (name == "random-target") return no_param(ModeKind::kRandomTarget);
  if (name == "clean-argmax") return no_param(ModeKind::kCleanArgmax);
  if (name == "ots-fixed") return ModeSpec{ModeKind::kOtsFixed, param.value_or(5)};
  if (name == "ots-stability" || name == "ots") {
    const auto s = param.value_or(default_stability);
    if (s < 1) throw ConfigError("stability threshold must be >= 1");
    return ModeSpec{ModeKind::kOtsStability, s};
  }
  throw ConfigError("unknown mode '" + std::string(text) + "'");
}

std::string to_string(const ModeSpec& mode) {
  switch (mode.kind) {
    case ModeKind::kUntargeted: return "untargeted";
    case ModeKind::kOracle: return "oracle";
    case ModeKind::kRandomTarget: return "random-target";
    case ModeKind::kCleanArgmax: return "clean-argmax";
    case ModeKind::kOtsFixed: return "ots-fixed:" + std::to_string(mode.param);
    case ModeKind::kOtsStability:
      return "ots-stability:" + std::to_string(mode.param);
  }
  return "?";
}

int default_stability_threshold(std::string_view attack) {
  if (attack.starts_with("square")) return 8;
  if (attack.starts_with("bandits")) return 15;
  return 10;
}

}  // namespace ots
