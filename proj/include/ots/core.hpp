#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ots {

/// Raised when a caller breaks a documented precondition (bad shape, bad
/// class index, empty input where one is required).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid experiment, attack, or basis configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The attack protocol was violated, e.g. attacking an input the oracle
/// already misclassifies.
class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Shape {
  int height = 1;
  int width = 1;
  int channels = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& shape);

/// Row-major H x W x C tensor of pixel values in the unit interval.
class Image {
 public:
  Image() = default;
  explicit Image(Shape shape, double fill = 0.0);
  Image(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<const double> pixels() const { return data_; }
  std::span<double> pixels() { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::size_t index(int row, int col, int channel) const {
    return (static_cast<std::size_t>(row) * shape_.width + col) *
               shape_.channels +
           channel;
  }
  double at(int row, int col, int channel) const {
    return data_[index(row, col, channel)];
  }

  bool operator==(const Image&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Raw classifier scores f(x), one per class.
struct LogitVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t k) const { return values[k]; }
  bool operator==(const LogitVector&) const = default;
};

/// softmax(f(x)); entries in [0, 1] summing to one.
struct ProbVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t k) const { return values[k]; }
  bool operator==(const ProbVector&) const = default;
};

/// L-infinity radius and iteration budget of an attack run.
struct PerturbationBudget {
  double epsilon = 8.0 / 255.0;
  std::int64_t iterations = 10000;

  void validate() const;
};

/// Index of the largest entry, lowest index on ties.
int argmax(std::span<const double> values);

/// Projects x_adv onto the intersection of the epsilon ball around x_orig
/// and the unit box.
Image clip_to_constraints(const Image& x_adv, const Image& x_orig,
                          double epsilon);

/// True when x satisfies the constraints clip_to_constraints enforces.
bool satisfies_constraints(const Image& x, const Image& x_orig,
                           double epsilon);

struct TracePoint {
  std::int64_t iteration = 0;
  int leader = -1;  // leading non-true class after this iteration
  std::vector<double> perturbation;  // x'(i) - x, empty unless requested
};

/// Outcome of one (classifier, attack, mode, image, seed) run.
struct RunRecord {
  std::string classifier_id;
  std::string attack_id;
  std::string mode_id;
  std::string image_id;
  std::string sweep_point;
  std::uint64_t seed = 0;
  int true_label = -1;

  bool success = false;
  std::int64_t iterations_used = 0;
  std::int64_t queries_used = 0;
  std::int64_t iteration_budget = 0;
  std::optional<std::int64_t> lock_iteration;
  std::optional<int> locked_class;
  std::optional<int> oracle_class;
  int final_class = -1;
  int leader_switches = 0;
  std::vector<int> clean_ranking;  // clean-image non-true classes, best first
  std::vector<TracePoint> trace;

  /// Fields that define the attack trajectory; excludes identifiers and
  /// lock diagnostics.
  bool same_trajectory(const RunRecord& other) const;
};

}  // namespace ots
