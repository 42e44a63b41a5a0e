#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ots/core.hpp"
#include "ots/oracle.hpp"

namespace ots {

/// f(x) = W x + b, W stored row-major K x D.
struct LinearSoftmaxParams {
  std::vector<double> weights;
  std::vector<double> bias;
};

/// f(x) = W2 tanh(W1 x + b1) + b2.
struct Mlp1Params {
  int hidden = 0;
  std::vector<double> w1;  // hidden x D
  std::vector<double> b1;
  std::vector<double> w2;  // K x hidden
  std::vector<double> b2;
};

/// f_k(x) = -gamma * min_j ||x - p_kj||^2 / temperature. Prototypes are stored
/// class-major: prototype j of class k starts at ((k * per_class) + j) * D.
struct RbfParams {
  int per_class = 1;
  double gamma = 1.0;
  double temperature = 1.0;
  std::vector<double> prototypes;
};

using ZooParams = std::variant<LinearSoftmaxParams, Mlp1Params, RbfParams>;

/// A deterministic synthetic classifier.
struct ZooSpec {
  std::string id;
  Shape shape{16, 16, 1};
  int num_classes = 100;
  std::uint64_t seed = 0;
  ZooParams params;

  std::string_view kind() const;
  void validate() const;
};

LogitVector zoo_eval(const ZooSpec& spec, const Image& x);

class ZooOracle : public ClassifierOracle {
 public:
  explicit ZooOracle(const ZooSpec& spec) : spec_(spec) {}
  int num_classes() const override { return spec_.num_classes; }
  const ZooSpec& spec() const { return spec_; }

 protected:
  LogitVector evaluate(const Image& x) override { return zoo_eval(spec_, x); }

 private:
  const ZooSpec& spec_;
};

ZooSpec make_linear_zoo(std::string id, int num_classes, Shape shape,
                        std::uint64_t seed, double weight_scale = 1.0);
ZooSpec make_mlp_zoo(std::string id, int num_classes, Shape shape,
                     std::uint64_t seed, int hidden = 32,
                     double weight_scale = 1.0);
ZooSpec make_rbf_zoo(std::string id, int num_classes, Shape shape,
                     std::uint64_t seed, int per_class = 2, double gamma = 1.0,
                     double temperature = 1.0);

/// Plain-text fixture; see README for the layout.
void save_zoo(const ZooSpec& spec, std::ostream& out);
ZooSpec load_zoo(std::istream& in);
void save_zoo(const ZooSpec& spec, const std::filesystem::path& path);
ZooSpec load_zoo(const std::filesystem::path& path);

enum class DifficultyProfile { kUniform, kMediumHeavy, kBimodal };

std::string_view to_string(DifficultyProfile profile);
DifficultyProfile parse_profile(std::string_view text);

/// Clean-margin ranges (logit units) that realize each difficulty profile on
/// RBF zoos. Calibrated against the default SimBA configuration, epsilon
/// 8/255, and budget 2000 on 16x16x1 inputs with K = 100.
struct ProfileCalibration {
  int version = 1;
  double uniform_lo = 0.05, uniform_hi = 12.0;
  double medium_lo = 2.0, medium_hi = 5.0;
  double easy_lo = 0.01, easy_hi = 0.3;
  double hard_lo = 10.0, hard_hi = 14.0;
  double easy_fraction = 0.5;
  int junction_classes = 2;     // competitors averaged into the start point
  double junction_jitter = 0.01;
};

struct Instance {
  std::string id;
  Image image;
  int label = -1;
  double clean_margin = 0.0;  // f_y - max_{k != y} f_k
};

struct InstanceSet {
  std::string zoo_id;
  DifficultyProfile profile = DifficultyProfile::kUniform;
  std::uint64_t seed = 0;
  std::vector<Instance> items;
};

/// Generation failure (retry cap hit).
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Samples n correctly classified inputs. On RBF zoos each instance starts
/// near the centroid of a few competitor prototypes and moves toward a
/// prototype of its class, keeping the competitors tied, until its clean
/// margin hits a target drawn from the profile's range. Other zoo kinds support only the uniform profile (label = argmax
/// of a uniform random input).
InstanceSet generate_instances(const ZooSpec& spec, int n,
                               DifficultyProfile profile, std::uint64_t seed,
                               const ProfileCalibration& calibration = {});

void save_instances(const InstanceSet& set, std::ostream& out);
void save_instances(const InstanceSet& set, const std::filesystem::path& path);
/// Reads without checking labels against a classifier.
InstanceSet load_instances(std::istream& in);
InstanceSet load_instances(const std::filesystem::path& path);
/// Also checks that every instance is correctly classified by `spec`.
InstanceSet load_instances(std::istream& in, const ZooSpec& spec);

double clean_margin(const LogitVector& logits, int label);

}  // namespace ots
