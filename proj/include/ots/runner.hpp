#pragma once

#include <cstdint>
#include <functional>

#include "ots/controller.hpp"
#include "ots/core.hpp"
#include "ots/engines.hpp"
#include "ots/oracle.hpp"
#include "ots/rng.hpp"

namespace ots {

struct RunOptions {
  bool trace_leaders = false;
  bool trace_perturbations = false;
  /// Last iteration recorded in the trace; negative records everything.
  std::int64_t trace_horizon = -1;
  /// Number of clean-image non-true classes stored in the record; negative
  /// stores all K - 1.
  int clean_ranking_size = -1;
  /// Called with the controller state after every consultation, starting
  /// with iteration 0. Used by audits.
  std::function<void(std::int64_t iteration, const LockState& state)> on_state;
};

/// Runs one attack until the oracle's argmax leaves the true class or the
/// iteration budget is spent. The controller is consulted before every step;
/// when it locks, the engine's cached loss is re-evaluated for the targeted
/// objective and the perturbation carries over unchanged.
///
/// Throws ProtocolViolation when the oracle misclassifies the clean image.
RunRecord run_attack(AttackEngine& engine, const LockPolicy& policy,
                     const Image& image, int true_label,
                     const AttackConfig& config, ClassifierOracle& oracle,
                     RngStream& rng, const RunOptions& options = {});

/// Builds a fresh engine and draws from fresh_rng(seed, "attack").
RunRecord run_attack(const AttackConfig& config, const LockPolicy& policy,
                     const Image& image, int true_label,
                     ClassifierOracle& oracle, std::uint64_t seed,
                     const RunOptions& options = {});

struct ProbeResult {
  int oracle_class = -1;
  RunRecord probe;
};

/// Untargeted run with the given seed. Its final class is the oracle target
/// on success; on failure, the leading non-true class at exhaustion.
ProbeResult oracle_probe(const AttackConfig& config, const Image& image,
                         int true_label, ClassifierOracle& oracle,
                         std::uint64_t seed, const RunOptions& options = {});

}  // namespace ots
