#include "ots/engines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

namespace ots {

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kSimba: return "simba";
    case AttackKind::kSquare: return "square";
    case AttackKind::kBandits: return "bandits";
  }
  return "?";
}

AttackKind parse_attack_kind(std::string_view text) {
  if (text == "simba") return AttackKind::kSimba;
  if (text == "square") return AttackKind::kSquare;
  if (text == "bandits") return AttackKind::kBandits;
  throw ConfigError("unknown attack '" + std::string(text) +
                    "' (expected simba, square or bandits)");
}

void AttackConfig::validate() const {
  budget.validate();
  if (simba.step_size && !(*simba.step_size > 0.0)) {
    throw ConfigError("SimBA step size must be positive");
  }
  if (!(square.p_init > 0.0 && square.p_init <= 1.0)) {
    throw ConfigError("Square p_init must lie in (0, 1]");
  }
  if (bandits.prior_downsample < 1) {
    throw ConfigError("Bandits prior downsample factor must be >= 1");
  }
  if (!(bandits.exploration >= 0.0) || !(bandits.fd_scale > 0.0) ||
      !(bandits.prior_lr > 0.0)) {
    throw ConfigError("Bandits exploration must be >= 0, fd scale and prior "
                      "rate positive");
  }
  if (bandits.image_lr && !(*bandits.image_lr > 0.0)) {
    throw ConfigError("Bandits image step must be positive");
  }
}

std::string AttackConfig::attack_id() const {
  return std::string(to_string(kind)) + "-" + std::string(to_string(loss));
}

AttackConfig default_attack_config(AttackKind kind) {
  AttackConfig config;
  config.kind = kind;
  switch (kind) {
    case AttackKind::kSimba:
      config.loss = LossFamily::kProb;
      break;
    case AttackKind::kSquare:
      config.loss = LossFamily::kCrossEntropy;
      break;
    case AttackKind::kBandits:
      config.loss = LossFamily::kCrossEntropy;
      config.budget.iterations = 5000;
      break;
  }
  return config;
}

// ---------------------------------------------------------------------------
// AttackEngine

void AttackEngine::start(const Image& clean, const LogitVector& clean_logits,
                         int true_class, const Objective& objective,
                         RngStream& /*rng*/, ClassifierOracle& /*oracle*/) {
  clean_ = clean;
  true_class_ = true_class;
  adopt(clean, clean_logits, eval_objective(objective, clean_logits));
}

void AttackEngine::retarget(const Objective& objective) {
  loss_ = eval_objective(objective, logits_);
}

LogitVector AttackEngine::query(Image& candidate,
                                ClassifierOracle& oracle) const {
  candidate = clip_to_constraints(candidate, clean_, config_.budget.epsilon);
  return oracle.score(candidate);
}

void AttackEngine::adopt(Image image, LogitVector logits, double loss) {
  current_ = std::move(image);
  logits_ = std::move(logits);
  loss_ = loss;
}

StepOutcome AttackEngine::outcome(bool accepted, int queries) const {
  return StepOutcome{accepted, queries, loss_, softmax(logits_)};
}

// ---------------------------------------------------------------------------
// SimBA

SimbaAttack::SimbaAttack(AttackConfig config) : AttackEngine(std::move(config)) {}

void SimbaAttack::start(const Image& clean, const LogitVector& clean_logits,
                        int true_class, const Objective& objective,
                        RngStream& rng, ClassifierOracle& oracle) {
  AttackEngine::start(clean, clean_logits, true_class, objective, rng, oracle);
  basis_.emplace(clean.shape(), config_.simba.basis);
  step_size_ = config_.simba.step_size.value_or(config_.budget.epsilon);
  order_.resize(basis_->size());
  reshuffle(rng);
}

void SimbaAttack::reshuffle(RngStream& rng) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
}

StepOutcome SimbaAttack::step(const Objective& objective, RngStream& rng,
                              ClassifierOracle& oracle) {
  if (cursor_ >= order_.size()) reshuffle(rng);
  const std::size_t atom = order_[cursor_++];

  int queries = 0;
  for (const double direction : {1.0, -1.0}) {
    Image candidate = current_;
    basis_->add_atom(candidate.pixels(), atom, direction * step_size_);
    LogitVector logits = query(candidate, oracle);
    ++queries;
    const double loss = eval_objective(objective, logits);
    if (loss < loss_) {
      adopt(std::move(candidate), std::move(logits), loss);
      return outcome(true, queries);
    }
  }
  return outcome(false, queries);
}

// ---------------------------------------------------------------------------
// Square Attack

int square_patch_side(std::int64_t iteration, std::int64_t total, double p_init,
                      const Shape& shape) {
  if (total <= 0 || iteration < 0 || iteration >= total) {
    throw ContractViolation("square_patch_side: need 0 <= i < N");
  }
  // Breakpoints in thousandths of the budget.
  constexpr std::array<std::int64_t, 8> kBreakpoints{1, 5, 20, 100, 200, 400, 600, 800};
  double p = p_init;
  for (const auto bp : kBreakpoints) {
    if (iteration * 1000 >= bp * total) p /= 2.0;
  }
  const double area = static_cast<double>(shape.height) * shape.width;
  const int side = std::max(1, static_cast<int>(std::lround(std::sqrt(p * area))));
  return std::min({side, shape.height, shape.width});
}

SquareAttack::SquareAttack(AttackConfig config) : AttackEngine(std::move(config)) {}

void SquareAttack::start(const Image& clean, const LogitVector& clean_logits,
                         int true_class, const Objective& objective,
                         RngStream& rng, ClassifierOracle& oracle) {
  AttackEngine::start(clean, clean_logits, true_class, objective, rng, oracle);
  const Shape& s = clean.shape();
  const double eps = config_.budget.epsilon;
  deltas_.assign(s.size(), 0.0);
  iteration_ = 0;
  // One random sign per (channel, column), shared down the column.
  for (int ch = 0; ch < s.channels; ++ch) {
    for (int col = 0; col < s.width; ++col) {
      const double value = eps * rng.sign();
      for (int row = 0; row < s.height; ++row) {
        deltas_[clean.index(row, col, ch)] = value;
      }
    }
  }
  Image candidate = clean;
  for (std::size_t i = 0; i < deltas_.size(); ++i) candidate[i] += deltas_[i];
  LogitVector logits = query(candidate, oracle);
  const double loss = eval_objective(objective, logits);
  adopt(std::move(candidate), std::move(logits), loss);
}

StepOutcome SquareAttack::step(const Objective& objective, RngStream& rng,
                               ClassifierOracle& oracle) {
  const Shape& s = clean_.shape();
  const double eps = config_.budget.epsilon;
  const std::int64_t total = std::max<std::int64_t>(config_.budget.iterations, 1);
  const std::int64_t i = std::min(iteration_, total - 1);
  ++iteration_;
  const int side = square_patch_side(i, total, config_.square.p_init, s);
  const int row0 = static_cast<int>(rng.uniform_index(s.height - side + 1));
  const int col0 = static_cast<int>(rng.uniform_index(s.width - side + 1));

  std::vector<double> proposal = deltas_;
  const auto apply_window = [&](std::span<const double> per_channel) {
    for (int r = row0; r < row0 + side; ++r) {
      for (int c = col0; c < col0 + side; ++c) {
        for (int ch = 0; ch < s.channels; ++ch) {
          proposal[clean_.index(r, c, ch)] = per_channel[ch];
        }
      }
    }
  };
  const auto window_changes = [&]() {
    for (int r = row0; r < row0 + side; ++r) {
      for (int c = col0; c < col0 + side; ++c) {
        for (int ch = 0; ch < s.channels; ++ch) {
          const std::size_t at = clean_.index(r, c, ch);
          const double x = clean_[at];
          const double lo = std::max(0.0, x - eps);
          const double hi = std::min(1.0, x + eps);
          if (std::clamp(x + proposal[at], lo, hi) != current_[at]) return true;
        }
      }
    }
    return false;
  };
  // Redraw the window values until the clipped image actually changes.
  constexpr int kMaxRedraws = 32;
  std::vector<double> values(s.channels);
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    for (double& v : values) v = eps * rng.sign();
    apply_window(values);
    if (window_changes()) break;
  }

  Image candidate = clean_;
  for (std::size_t k = 0; k < proposal.size(); ++k) candidate[k] += proposal[k];
  LogitVector logits = query(candidate, oracle);
  const double loss = eval_objective(objective, logits);
  if (loss < loss_) {
    deltas_ = std::move(proposal);
    adopt(std::move(candidate), std::move(logits), loss);
    return outcome(true, 1);
  }
  return outcome(false, 1);
}

// ---------------------------------------------------------------------------
// Bandits

BanditsAttack::BanditsAttack(AttackConfig config)
    : AttackEngine(std::move(config)) {}

void BanditsAttack::start(const Image& clean, const LogitVector& clean_logits,
                          int true_class, const Objective& objective,
                          RngStream& rng, ClassifierOracle& oracle) {
  AttackEngine::start(clean, clean_logits, true_class, objective, rng, oracle);
  factor_ = config_.bandits.prior_downsample;
  const Shape& s = clean.shape();
  if (s.height % factor_ != 0 || s.width % factor_ != 0) {
    throw ConfigError("Bandits prior downsample factor " +
                      std::to_string(factor_) + " does not divide " +
                      to_string(s));
  }
  prior_shape_ = Shape{s.height / factor_, s.width / factor_, s.channels};
  prior_.assign(prior_shape_.size(), 0.0);
  last_u_.assign(prior_shape_.size(), 0.0);
  last_estimate_ = 0.0;
}

std::vector<double> BanditsAttack::upsample(const std::vector<double>& low) const {
  const Shape& s = clean_.shape();
  std::vector<double> out(s.size());
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      for (int ch = 0; ch < s.channels; ++ch) {
        const std::size_t src =
            (static_cast<std::size_t>(r / factor_) * prior_shape_.width +
             c / factor_) * prior_shape_.channels + ch;
        out[clean_.index(r, c, ch)] = low[src];
      }
    }
  }
  return out;
}

StepOutcome BanditsAttack::step(const Objective& objective, RngStream& rng,
                                ClassifierOracle& oracle) {
  const auto& p = config_.bandits;
  const double eps = config_.budget.epsilon;
  const std::size_t n = prior_.size();

  for (std::size_t k = 0; k < n; ++k) last_u_[k] = rng.normal();
  std::vector<double> plus(n), minus(n);
  for (std::size_t k = 0; k < n; ++k) {
    plus[k] = prior_[k] + p.exploration * last_u_[k];
    minus[k] = prior_[k] - p.exploration * last_u_[k];
  }

  int queries = 0;
  std::array<double, 2> losses{};
  const std::array<const std::vector<double>*, 2> probes{&plus, &minus};
  LogitVector last_logits;
  for (std::size_t j = 0; j < probes.size(); ++j) {
    const std::vector<double> direction = upsample(*probes[j]);
    Image candidate = current_;
    for (std::size_t k = 0; k < direction.size(); ++k) {
      candidate[k] += p.fd_scale * direction[k];
    }
    LogitVector logits = query(candidate, oracle);
    ++queries;
    losses[j] = eval_objective(objective, logits);
    if (argmax(logits.values) != true_class_) {
      // A probe already crossed the boundary; it is a valid constrained
      // image, so the run ends on it.
      adopt(std::move(candidate), std::move(logits), losses[j]);
      return outcome(true, queries);
    }
    last_logits = std::move(logits);
  }

  // Antithetic estimate of the loss derivative along up(u).
  last_estimate_ = losses[0] == losses[1]
                       ? 0.0
                       : (losses[0] - losses[1]) /
                             (2.0 * p.fd_scale * p.exploration);
  // Exponentiated-gradient step keeps the prior inside (-1, 1):
  // v <- tanh(atanh(v) - eta * g), descending the loss.
  constexpr double kEdge = 1.0 - 1e-12;
  for (std::size_t k = 0; k < n; ++k) {
    const double g = last_estimate_ * last_u_[k];
    const double v = std::clamp(prior_[k], -kEdge, kEdge);
    prior_[k] = std::tanh(std::atanh(v) - p.prior_lr * g);
  }

  const double image_lr = p.image_lr.value_or(eps / 10.0);
  const std::vector<double> direction = upsample(prior_);
  Image moved = current_;
  for (std::size_t k = 0; k < direction.size(); ++k) {
    const double d = direction[k];
    const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    moved[k] += image_lr * sgn;
  }
  moved = clip_to_constraints(moved, clean_, eps);
  const bool moved_any = moved != current_;

  if (p.strict_success_check) {
    LogitVector logits = oracle.score(moved);
    ++queries;
    const double loss = eval_objective(objective, logits);
    adopt(std::move(moved), std::move(logits), loss);
  } else {
    // Scores of the last probe stand in for the moved image until the next
    // step probes around it.
    const double loss = losses[1];
    adopt(std::move(moved), std::move(last_logits), loss);
  }
  return outcome(moved_any, queries);
}

std::unique_ptr<AttackEngine> make_engine(const AttackConfig& config) {
  config.validate();
  switch (config.kind) {
    case AttackKind::kSimba: return std::make_unique<SimbaAttack>(config);
    case AttackKind::kSquare: return std::make_unique<SquareAttack>(config);
    case AttackKind::kBandits: return std::make_unique<BanditsAttack>(config);
  }
  throw ConfigError("unknown attack kind");
}

}  // namespace ots
