#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "ots/basis.hpp"
#include "ots/core.hpp"
#include "ots/objectives.hpp"
#include "ots/oracle.hpp"
#include "ots/rng.hpp"

namespace ots {

enum class AttackKind { kSimba, kSquare, kBandits };

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view text);

struct SimbaParams {
  BasisKind basis = BasisKind::kDct8;
  std::optional<double> step_size;  // defaults to epsilon
};

struct SquareParams {
  double p_init = 0.05;
};

struct BanditsParams {
  int prior_downsample = 1;     // prior is (H/d) x (W/d) x C
  double exploration = 0.01;    // tau
  double fd_scale = 0.01;       // finite-difference probe scale
  double prior_lr = 0.1;        // eta
  std::optional<double> image_lr;  // defaults to epsilon / 10
  bool strict_success_check = false;  // spend one extra query per step
};

struct AttackConfig {
  AttackKind kind = AttackKind::kSimba;
  LossFamily loss = LossFamily::kProb;
  PerturbationBudget budget;
  SimbaParams simba;
  SquareParams square;
  BanditsParams bandits;

  void validate() const;
  std::string attack_id() const;  // e.g. "simba-prob"
};

/// Default configuration for an attack, following the benchmark protocol:
/// SimBA uses the probability loss, Square Attack and Bandits cross-entropy.
AttackConfig default_attack_config(AttackKind kind);

struct StepOutcome {
  bool accepted = false;
  int queries_spent = 0;
  double loss = 0.0;
  ProbVector probs;  // at the engine's current image after the step
};

/// Step-based score attack. The objective is passed on every step so a
/// controller can swap it mid-run without touching the perturbation.
class AttackEngine {
 public:
  virtual ~AttackEngine() = default;

  virtual AttackKind kind() const = 0;

  /// Begins a run at the clean image. May spend queries (Square's
  /// initialization does).
  virtual void start(const Image& clean, const LogitVector& clean_logits,
                     int true_class, const Objective& objective,
                     RngStream& rng, ClassifierOracle& oracle);

  virtual StepOutcome step(const Objective& objective, RngStream& rng,
                           ClassifierOracle& oracle) = 0;

  /// Recomputes the cached loss for a new objective from the cached scores.
  void retarget(const Objective& objective);

  const Image& current() const { return current_; }
  const LogitVector& current_logits() const { return logits_; }
  ProbVector current_probs() const { return softmax(logits_); }
  double loss() const { return loss_; }

 protected:
  explicit AttackEngine(AttackConfig config) : config_(std::move(config)) {}

  /// Scores a candidate after projecting it onto the constraint set.
  LogitVector query(Image& candidate, ClassifierOracle& oracle) const;
  void adopt(Image image, LogitVector logits, double loss);
  StepOutcome outcome(bool accepted, int queries) const;

  AttackConfig config_;
  Image clean_;
  int true_class_ = -1;
  Image current_;
  LogitVector logits_;
  double loss_ = 0.0;
};

/// Coordinate search over a random ordering of an orthonormal basis:
/// try +step*q, then -step*q, accept on strict loss decrease.
class SimbaAttack : public AttackEngine {
 public:
  explicit SimbaAttack(AttackConfig config);

  AttackKind kind() const override { return AttackKind::kSimba; }
  void start(const Image& clean, const LogitVector& clean_logits,
             int true_class, const Objective& objective, RngStream& rng,
             ClassifierOracle& oracle) override;
  StepOutcome step(const Objective& objective, RngStream& rng,
                   ClassifierOracle& oracle) override;

  std::size_t cursor() const { return cursor_; }
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  void reshuffle(RngStream& rng);

  std::optional<Basis> basis_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  double step_size_ = 0.0;
};

/// Square-window side length for iteration i of N:
/// max(1, round(sqrt(p_i * H * W))) clamped to min(H, W), where p_i is p_init
/// halved once for every breakpoint i/N has reached in
/// {0.001, 0.005, 0.02, 0.1, 0.2, 0.4, 0.6, 0.8}.
int square_patch_side(std::int64_t iteration, std::int64_t total, double p_init,
                      const Shape& shape);

/// Random search over L-infinity extreme points with shrinking square
/// windows. Starts from vertical +-epsilon stripes.
class SquareAttack : public AttackEngine {
 public:
  explicit SquareAttack(AttackConfig config);

  AttackKind kind() const override { return AttackKind::kSquare; }
  void start(const Image& clean, const LogitVector& clean_logits,
             int true_class, const Objective& objective, RngStream& rng,
             ClassifierOracle& oracle) override;
  StepOutcome step(const Objective& objective, RngStream& rng,
                   ClassifierOracle& oracle) override;

  /// Signed offsets (+-epsilon) before clipping to the unit box.
  const std::vector<double>& deltas() const { return deltas_; }
  std::int64_t iteration() const { return iteration_; }

 private:
  std::vector<double> deltas_;
  std::int64_t iteration_ = 0;
};

/// Gradient estimation with a low-resolution prior, sign steps, and an
/// exponentiated-gradient prior update (L-infinity bandits).
class BanditsAttack : public AttackEngine {
 public:
  explicit BanditsAttack(AttackConfig config);

  AttackKind kind() const override { return AttackKind::kBandits; }
  void start(const Image& clean, const LogitVector& clean_logits,
             int true_class, const Objective& objective, RngStream& rng,
             ClassifierOracle& oracle) override;
  StepOutcome step(const Objective& objective, RngStream& rng,
                   ClassifierOracle& oracle) override;

  const std::vector<double>& prior() const { return prior_; }
  const Shape& prior_shape() const { return prior_shape_; }
  /// Directional-derivative estimate from the latest antithetic probe pair.
  double last_estimate() const { return last_estimate_; }
  const std::vector<double>& last_exploration() const { return last_u_; }

  /// Nearest-neighbour upsampling of a prior-resolution tensor.
  std::vector<double> upsample(const std::vector<double>& low) const;

 private:
  Shape prior_shape_;
  int factor_ = 1;
  std::vector<double> prior_;
  std::vector<double> last_u_;
  double last_estimate_ = 0.0;
};

std::unique_ptr<AttackEngine> make_engine(const AttackConfig& config);

}  // namespace ots
