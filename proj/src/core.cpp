#include "ots/core.hpp"

#include <algorithm>
#include <cmath>

namespace ots {

std::string to_string(const Shape& shape) {
  return std::to_string(shape.height) + "x" + std::to_string(shape.width) +
         "x" + std::to_string(shape.channels);
}

Image::Image(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.height < 1 || shape.width < 1 || shape.channels < 1) {
    throw ContractViolation("image dimensions must be positive, got " +
                            to_string(shape));
  }
}

Image::Image(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (shape.height < 1 || shape.width < 1 || shape.channels < 1) {
    throw ContractViolation("image dimensions must be positive, got " +
                            to_string(shape));
  }
  if (data_.size() != shape.size()) {
    throw ContractViolation("image data length " + std::to_string(data_.size()) +
                            " does not match shape " + to_string(shape));
  }
}

void PerturbationBudget::validate() const {
  if (!(epsilon > 0.0) || epsilon > 1.0) {
    throw ConfigError("epsilon must lie in (0, 1]");
  }
  if (iterations < 0) {
    throw ConfigError("iteration budget must be non-negative");
  }
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("argmax of an empty vector");
  int best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = static_cast<int>(k);
  }
  return best;
}

Image clip_to_constraints(const Image& x_adv, const Image& x_orig,
                          double epsilon) {
  if (x_adv.shape() != x_orig.shape()) {
    throw ContractViolation("clip_to_constraints: shape mismatch " +
                            to_string(x_adv.shape()) + " vs " +
                            to_string(x_orig.shape()));
  }
  Image out = x_adv;
  auto px = out.pixels();
  const auto orig = x_orig.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double lo = std::max(0.0, orig[i] - epsilon);
    const double hi = std::min(1.0, orig[i] + epsilon);
    px[i] = std::clamp(px[i], lo, hi);
  }
  return out;
}

bool satisfies_constraints(const Image& x, const Image& x_orig,
                           double epsilon) {
  if (x.shape() != x_orig.shape()) return false;
  const auto px = x.pixels();
  const auto orig = x_orig.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double lo = std::max(0.0, orig[i] - epsilon);
    const double hi = std::min(1.0, orig[i] + epsilon);
    if (!(px[i] >= lo && px[i] <= hi)) return false;
  }
  return true;
}

bool RunRecord::same_trajectory(const RunRecord& other) const {
  if (success != other.success || iterations_used != other.iterations_used ||
      queries_used != other.queries_used || final_class != other.final_class ||
      leader_switches != other.leader_switches ||
      trace.size() != other.trace.size()) {
    return false;
  }
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& a = trace[i];
    const auto& b = other.trace[i];
    if (a.iteration != b.iteration || a.leader != b.leader ||
        a.perturbation != b.perturbation) {
      return false;
    }
  }
  return true;
}

}  // namespace ots
