#include "ots/runner.hpp"

#include <algorithm>

namespace ots {

namespace {

void record_trace_point(RunRecord& record, const RunOptions& options,
                        std::int64_t iteration, int leader,
                        const AttackEngine& engine, const Image& clean) {
  if (!options.trace_leaders && !options.trace_perturbations) return;
  if (options.trace_horizon >= 0 && iteration > options.trace_horizon) return;
  TracePoint point;
  point.iteration = iteration;
  point.leader = leader;
  if (options.trace_perturbations) {
    const auto now = engine.current().pixels();
    const auto orig = clean.pixels();
    point.perturbation.resize(now.size());
    for (std::size_t i = 0; i < now.size(); ++i) {
      point.perturbation[i] = now[i] - orig[i];
    }
  }
  record.trace.push_back(std::move(point));
}

}  // namespace

RunRecord run_attack(AttackEngine& engine, const LockPolicy& policy,
                     const Image& image, int true_label,
                     const AttackConfig& config, ClassifierOracle& oracle,
                     RngStream& rng, const RunOptions& options) {
  config.validate();
  const std::int64_t queries_before = oracle.queries();
  const std::int64_t budget = config.budget.iterations;

  RunRecord record;
  record.attack_id = config.attack_id();
  record.seed = rng.seed();
  record.true_label = true_label;
  record.iteration_budget = budget;

  const LogitVector clean_logits = oracle.score(image);
  if (true_label < 0 || static_cast<std::size_t>(true_label) >= clean_logits.size()) {
    throw ContractViolation("true label outside the oracle's class range");
  }
  if (argmax(clean_logits.values) != true_label) {
    throw ProtocolViolation("input is not correctly classified (predicted " +
                            std::to_string(argmax(clean_logits.values)) +
                            ", label " + std::to_string(true_label) + ")");
  }
  const ProbVector clean_probs = softmax(clean_logits);
  const int all_others = static_cast<int>(clean_probs.size()) - 1;
  const int ranking_size = options.clean_ranking_size < 0
                               ? all_others
                               : std::min(options.clean_ranking_size, all_others);
  record.clean_ranking = class_ranking(clean_probs, true_label, ranking_size);

  LockState state = ots_update(Exploring{}, clean_probs, true_label, false, 0, policy);
  if (options.on_state) options.on_state(0, state);
  engine.start(image, clean_logits, true_label,
               effective_objective(state, true_label, config.loss), rng, oracle);

  ProbVector probs = engine.current_probs();
  int leader = leading_non_true(probs, true_label);
  record_trace_point(record, options, 0, leader, engine, image);

  std::int64_t iteration = 0;
  bool last_accepted = false;
  while (argmax(probs.values) == true_label && iteration < budget) {
    if (iteration > 0) {
      const bool was_locked = is_locked(state);
      state = ots_update(state, probs, true_label, last_accepted, iteration, policy);
      if (!was_locked && is_locked(state)) {
        engine.retarget(effective_objective(state, true_label, config.loss));
      }
      if (options.on_state) options.on_state(iteration, state);
    }
    const Objective objective = effective_objective(state, true_label, config.loss);
    StepOutcome out = engine.step(objective, rng, oracle);
    ++iteration;
    last_accepted = out.accepted;
    probs = std::move(out.probs);
    const int next_leader = leading_non_true(probs, true_label);
    if (next_leader != leader) ++record.leader_switches;
    leader = next_leader;
    record_trace_point(record, options, iteration, leader, engine, image);
  }

  record.final_class = argmax(probs.values);
  record.success = record.final_class != true_label;
  record.iterations_used = iteration;
  record.queries_used = oracle.queries() - queries_before;
  if (const auto* locked = std::get_if<Locked>(&state)) {
    record.lock_iteration = locked->iteration;
    record.locked_class = locked->target;
  }
  return record;
}

RunRecord run_attack(const AttackConfig& config, const LockPolicy& policy,
                     const Image& image, int true_label,
                     ClassifierOracle& oracle, std::uint64_t seed,
                     const RunOptions& options) {
  auto engine = make_engine(config);
  RngStream rng = fresh_rng(seed, "attack");
  return run_attack(*engine, policy, image, true_label, config, oracle, rng,
                    options);
}

ProbeResult oracle_probe(const AttackConfig& config, const Image& image,
                         int true_label, ClassifierOracle& oracle,
                         std::uint64_t seed, const RunOptions& options) {
  auto engine = make_engine(config);
  RngStream rng = fresh_rng(seed, "attack");
  ProbeResult result;
  result.probe = run_attack(*engine, Untargeted{}, image, true_label, config,
                            oracle, rng, options);
  result.oracle_class =
      result.probe.success
          ? result.probe.final_class
          : leading_non_true(engine->current_probs(), true_label);
  result.probe.oracle_class = result.oracle_class;
  return result;
}

}  // namespace ots
