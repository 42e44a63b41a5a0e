#pragma once

#include <functional>
#include <vector>

#include "ots/oracle.hpp"

namespace ots::testing {

/// Oracle defined by a plain function of the image.
class FunctionOracle : public ClassifierOracle {
 public:
  using Fn = std::function<std::vector<double>(const Image&)>;

  FunctionOracle(int k, Fn fn) : k_(k), fn_(std::move(fn)) {}
  int num_classes() const override { return k_; }

 protected:
  LogitVector evaluate(const Image& x) override { return LogitVector{fn_(x)}; }

 private:
  int k_;
  Fn fn_;
};

/// Same logits for every input; the first class leads.
inline FunctionOracle constant_oracle(int k) {
  return FunctionOracle(k, [k](const Image&) {
    std::vector<double> v(k, 0.0);
    v[0] = 1.0;
    return v;
  });
}

/// Two classes with logits (s, -s), s = w . x + b.
inline FunctionOracle linear_two_class(std::vector<double> w, double b) {
  return FunctionOracle(2, [w = std::move(w), b](const Image& x) {
    double s = b;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
    return std::vector<double>{s, -s};
  });
}

}  // namespace ots::testing
