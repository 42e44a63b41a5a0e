#pragma once

#include <cstdint>
#include <functional>

#include "ots/core.hpp"

namespace ots {

/// Black-box scorer: full score vector out, no gradients. Every call to
/// score() counts as exactly one query.
class ClassifierOracle {
 public:
  virtual ~ClassifierOracle() = default;

  LogitVector score(const Image& x) {
    LogitVector out = evaluate(x);
    ++queries_;
    return out;
  }

  virtual int num_classes() const = 0;
  std::int64_t queries() const { return queries_; }

 protected:
  virtual LogitVector evaluate(const Image& x) = 0;

 private:
  std::int64_t queries_ = 0;
};

/// Forwards to another oracle and hands every submitted image to an
/// inspector first. Used to audit constraint satisfaction of whole runs.
class InspectingOracle : public ClassifierOracle {
 public:
  using Inspector = std::function<void(const Image&)>;

  InspectingOracle(ClassifierOracle& inner, Inspector inspector)
      : inner_(inner), inspector_(std::move(inspector)) {}

  int num_classes() const override { return inner_.num_classes(); }

 protected:
  LogitVector evaluate(const Image& x) override {
    inspector_(x);
    return inner_.score(x);
  }

 private:
  ClassifierOracle& inner_;
  Inspector inspector_;
};

}  // namespace ots
