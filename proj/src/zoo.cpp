#include "ots/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>

#include "ots/objectives.hpp"
#include "ots/rng.hpp"
#include "text_io.hpp"

namespace ots {

namespace {

constexpr std::string_view kZooMagic = "ots-zoo";
constexpr std::string_view kInstancesMagic = "ots-instances";
constexpr int kFormatVersion = 1;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_size(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw ConfigError(std::string("zoo parameter '") + what + "' has " +
                      std::to_string(v.size()) + " values, expected " +
                      std::to_string(n));
  }
}

void require_finite(const std::vector<double>& v, const char* what) {
  for (const double x : v) {
    if (!std::isfinite(x)) {
      throw ConfigError(std::string("zoo parameter '") + what + "' is not finite");
    }
  }
}

std::vector<double> gaussian(RngStream& rng, std::size_t n, double scale) {
  std::vector<double> out(n);
  for (auto& v : out) v = scale * rng.normal();
  return out;
}

}  // namespace

std::string_view ZooSpec::kind() const {
  return std::visit(Overloaded{
                        [](const LinearSoftmaxParams&) { return std::string_view("linear"); },
                        [](const Mlp1Params&) { return std::string_view("mlp1"); },
                        [](const RbfParams&) { return std::string_view("rbf"); },
                    },
                    params);
}

void ZooSpec::validate() const {
  if (num_classes < 2) throw ConfigError("zoo needs at least two classes");
  if (shape.height < 1 || shape.width < 1 || shape.channels < 1) {
    throw ConfigError("zoo input shape must be positive");
  }
  const std::size_t d = shape.size();
  const std::size_t k = num_classes;
  std::visit(Overloaded{
                 [&](const LinearSoftmaxParams& p) {
                   require_size(p.weights, k * d, "weights");
                   require_size(p.bias, k, "bias");
                   require_finite(p.weights, "weights");
                   require_finite(p.bias, "bias");
                 },
                 [&](const Mlp1Params& p) {
                   if (p.hidden < 1) throw ConfigError("mlp1 hidden width must be >= 1");
                   const std::size_t h = p.hidden;
                   require_size(p.w1, h * d, "w1");
                   require_size(p.b1, h, "b1");
                   require_size(p.w2, k * h, "w2");
                   require_size(p.b2, k, "b2");
                   for (const auto* v : {&p.w1, &p.b1, &p.w2, &p.b2}) {
                     require_finite(*v, "mlp1 weights");
                   }
                 },
                 [&](const RbfParams& p) {
                   if (p.per_class < 1) throw ConfigError("rbf needs >= 1 prototype per class");
                   if (!(p.gamma > 0.0) || !(p.temperature > 0.0)) {
                     throw ConfigError("rbf gamma and temperature must be positive");
                   }
                   require_size(p.prototypes, k * p.per_class * d, "prototypes");
                   for (const double x : p.prototypes) {
                     if (!(x >= 0.0 && x <= 1.0)) {
                       throw ConfigError("rbf prototypes must lie in the unit box");
                     }
                   }
                 },
             },
             params);
}

LogitVector zoo_eval(const ZooSpec& spec, const Image& x) {
  if (x.shape() != spec.shape) {
    throw ContractViolation("zoo '" + spec.id + "' expects shape " +
                            to_string(spec.shape) + ", got " +
                            to_string(x.shape()));
  }
  const std::size_t d = spec.shape.size();
  const std::size_t k = spec.num_classes;
  const double* px = x.pixels().data();
  LogitVector out;
  out.values.resize(k);
  std::visit(
      Overloaded{
          [&](const LinearSoftmaxParams& p) {
            for (std::size_t c = 0; c < k; ++c) {
              const double* w = p.weights.data() + c * d;
              double acc = p.bias[c];
              for (std::size_t i = 0; i < d; ++i) acc += w[i] * px[i];
              out.values[c] = acc;
            }
          },
          [&](const Mlp1Params& p) {
            std::vector<double> hidden(p.hidden);
            for (int h = 0; h < p.hidden; ++h) {
              const double* w = p.w1.data() + static_cast<std::size_t>(h) * d;
              double acc = p.b1[h];
              for (std::size_t i = 0; i < d; ++i) acc += w[i] * px[i];
              hidden[h] = std::tanh(acc);
            }
            for (std::size_t c = 0; c < k; ++c) {
              const double* w = p.w2.data() + c * p.hidden;
              double acc = p.b2[c];
              for (int h = 0; h < p.hidden; ++h) acc += w[h] * hidden[h];
              out.values[c] = acc;
            }
          },
          [&](const RbfParams& p) {
            const double scale = p.gamma / p.temperature;
            const double* proto = p.prototypes.data();
            for (std::size_t c = 0; c < k; ++c) {
              double best = std::numeric_limits<double>::infinity();
              for (int j = 0; j < p.per_class; ++j, proto += d) {
                double acc = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                  const double diff = px[i] - proto[i];
                  acc += diff * diff;
                }
                best = std::min(best, acc);
              }
              out.values[c] = -scale * best;
            }
          },
      },
      spec.params);
  return out;
}

ZooSpec make_linear_zoo(std::string id, int num_classes, Shape shape,
                        std::uint64_t seed, double weight_scale) {
  RngStream rng = fresh_rng(seed, "zoo/linear");
  const std::size_t d = shape.size();
  ZooSpec spec{std::move(id), shape, num_classes, seed, {}};
  LinearSoftmaxParams p;
  p.weights = gaussian(rng, num_classes * d, weight_scale / std::sqrt(double(d)));
  p.bias = gaussian(rng, num_classes, 0.1 * weight_scale);
  spec.params = std::move(p);
  spec.validate();
  return spec;
}

ZooSpec make_mlp_zoo(std::string id, int num_classes, Shape shape,
                     std::uint64_t seed, int hidden, double weight_scale) {
  RngStream rng = fresh_rng(seed, "zoo/mlp1");
  const std::size_t d = shape.size();
  ZooSpec spec{std::move(id), shape, num_classes, seed, {}};
  Mlp1Params p;
  p.hidden = hidden;
  p.w1 = gaussian(rng, hidden * d, weight_scale * 4.0 / std::sqrt(double(d)));
  p.b1 = gaussian(rng, hidden, 0.5 * weight_scale);
  p.w2 = gaussian(rng, num_classes * static_cast<std::size_t>(hidden),
                  weight_scale * 2.0 / std::sqrt(double(hidden)));
  p.b2 = gaussian(rng, num_classes, 0.1 * weight_scale);
  spec.params = std::move(p);
  spec.validate();
  return spec;
}

ZooSpec make_rbf_zoo(std::string id, int num_classes, Shape shape,
                     std::uint64_t seed, int per_class, double gamma,
                     double temperature) {
  RngStream rng = fresh_rng(seed, "zoo/rbf");
  ZooSpec spec{std::move(id), shape, num_classes, seed, {}};
  RbfParams p;
  p.per_class = per_class;
  p.gamma = gamma;
  p.temperature = temperature;
  p.prototypes.resize(static_cast<std::size_t>(num_classes) * per_class * shape.size());
  for (auto& v : p.prototypes) v = rng.uniform();
  spec.params = std::move(p);
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Fixture files

void save_zoo(const ZooSpec& spec, std::ostream& out) {
  spec.validate();
  out << kZooMagic << " v" << kFormatVersion << '\n'
      << "id " << spec.id << '\n'
      << "kind " << spec.kind() << '\n'
      << "seed " << spec.seed << '\n'
      << "shape " << spec.shape.height << ' ' << spec.shape.width << ' '
      << spec.shape.channels << '\n'
      << "classes " << spec.num_classes << '\n';
  std::visit(Overloaded{
                 [&](const LinearSoftmaxParams& p) {
                   detail::write_array(out, "weights", p.weights);
                   detail::write_array(out, "bias", p.bias);
                 },
                 [&](const Mlp1Params& p) {
                   out << "hidden " << p.hidden << '\n';
                   detail::write_array(out, "w1", p.w1);
                   detail::write_array(out, "b1", p.b1);
                   detail::write_array(out, "w2", p.w2);
                   detail::write_array(out, "b2", p.b2);
                 },
                 [&](const RbfParams& p) {
                   out << "per_class " << p.per_class << '\n'
                       << "gamma " << detail::format_double(p.gamma) << '\n'
                       << "temperature " << detail::format_double(p.temperature) << '\n';
                   detail::write_array(out, "prototypes", p.prototypes);
                 },
             },
             spec.params);
  out << "end\n";
}

ZooSpec load_zoo(std::istream& in) {
  using detail::expect_keyword;
  using detail::expect_token;
  expect_keyword(in, std::string(kZooMagic));
  const std::string version = expect_token(in, "version");
  if (version != "v" + std::to_string(kFormatVersion)) {
    throw ConfigError("unsupported zoo fixture version '" + version + "'");
  }
  ZooSpec spec;
  expect_keyword(in, "id");
  spec.id = expect_token(in, "id");
  expect_keyword(in, "kind");
  const std::string kind = expect_token(in, "kind");
  expect_keyword(in, "seed");
  spec.seed = std::stoull(expect_token(in, "seed"));
  expect_keyword(in, "shape");
  spec.shape.height = std::stoi(expect_token(in, "height"));
  spec.shape.width = std::stoi(expect_token(in, "width"));
  spec.shape.channels = std::stoi(expect_token(in, "channels"));
  expect_keyword(in, "classes");
  spec.num_classes = std::stoi(expect_token(in, "classes"));
  if (kind == "linear") {
    LinearSoftmaxParams p;
    p.weights = detail::read_array(in, "weights");
    p.bias = detail::read_array(in, "bias");
    spec.params = std::move(p);
  } else if (kind == "mlp1") {
    Mlp1Params p;
    expect_keyword(in, "hidden");
    p.hidden = std::stoi(expect_token(in, "hidden"));
    p.w1 = detail::read_array(in, "w1");
    p.b1 = detail::read_array(in, "b1");
    p.w2 = detail::read_array(in, "w2");
    p.b2 = detail::read_array(in, "b2");
    spec.params = std::move(p);
  } else if (kind == "rbf") {
    RbfParams p;
    expect_keyword(in, "per_class");
    p.per_class = std::stoi(expect_token(in, "per_class"));
    expect_keyword(in, "gamma");
    p.gamma = detail::parse_double(expect_token(in, "gamma"));
    expect_keyword(in, "temperature");
    p.temperature = detail::parse_double(expect_token(in, "temperature"));
    p.prototypes = detail::read_array(in, "prototypes");
    spec.params = std::move(p);
  } else {
    throw ConfigError("unknown zoo kind '" + kind + "'");
  }
  expect_keyword(in, "end");
  spec.validate();
  return spec;
}

void save_zoo(const ZooSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  save_zoo(spec, out);
}

ZooSpec load_zoo(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  return load_zoo(in);
}

// ---------------------------------------------------------------------------
// Instances

std::string_view to_string(DifficultyProfile profile) {
  switch (profile) {
    case DifficultyProfile::kUniform: return "uniform";
    case DifficultyProfile::kMediumHeavy: return "medium-heavy";
    case DifficultyProfile::kBimodal: return "bimodal";
  }
  return "?";
}

DifficultyProfile parse_profile(std::string_view text) {
  if (text == "uniform") return DifficultyProfile::kUniform;
  if (text == "medium-heavy") return DifficultyProfile::kMediumHeavy;
  if (text == "bimodal") return DifficultyProfile::kBimodal;
  throw ConfigError("unknown difficulty profile '" + std::string(text) + "'");
}

double clean_margin(const LogitVector& logits, int label) {
  return eval_objective(Objective::untargeted(LossFamily::kMargin, label), logits);
}

namespace {

constexpr int kRetryCap = 1000;

double draw_target_margin(DifficultyProfile profile, const ProfileCalibration& cal,
                          RngStream& rng) {
  const auto between = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  switch (profile) {
    case DifficultyProfile::kUniform: return between(cal.uniform_lo, cal.uniform_hi);
    case DifficultyProfile::kMediumHeavy: return between(cal.medium_lo, cal.medium_hi);
    case DifficultyProfile::kBimodal:
      return rng.uniform() < cal.easy_fraction ? between(cal.easy_lo, cal.easy_hi)
                                               : between(cal.hard_lo, cal.hard_hi);
  }
  return cal.uniform_lo;
}

Image uniform_image(const Shape& shape, RngStream& rng) {
  Image x(shape);
  for (auto& v : x.pixels()) v = rng.uniform();
  return x;
}

// Starts at a junction (the centroid of a few competitor prototypes, where
// those competitors tie) and walks toward a prototype of `label` inside the
// subspace that keeps the tie, until the clean margin equals `target`.
std::optional<Instance> place_at_junction(const ZooSpec& spec, const RbfParams& p,
                                          const ProfileCalibration& cal, int label,
                                          double target, RngStream& rng) {
  const std::size_t d = spec.shape.size();
  const auto prototype = [&](int cls, std::size_t j) {
    return p.prototypes.data() + (static_cast<std::size_t>(cls) * p.per_class + j) * d;
  };
  const int junction = std::max(1, cal.junction_classes);
  std::vector<const double*> members;
  std::vector<int> used{label};
  while (static_cast<int>(members.size()) < junction &&
         static_cast<int>(used.size()) < spec.num_classes) {
    const int other = static_cast<int>(rng.uniform_index(spec.num_classes));
    if (std::find(used.begin(), used.end(), other) != used.end()) continue;
    used.push_back(other);
    members.push_back(prototype(other, rng.uniform_index(p.per_class)));
  }
  std::vector<double> z(d, 0.0);
  for (const double* q : members) {
    for (std::size_t i = 0; i < d; ++i) z[i] += q[i] / members.size();
  }
  for (std::size_t i = 0; i < d; ++i) {
    z[i] = std::clamp(z[i] + cal.junction_jitter * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
  }

  const double* target_proto = prototype(label, rng.uniform_index(p.per_class));
  std::vector<double> dir(d);
  for (std::size_t i = 0; i < d; ++i) dir[i] = target_proto[i] - z[i];
  // Gram-Schmidt against the differences between junction members.
  std::vector<std::vector<double>> ortho;
  for (std::size_t m = 1; m < members.size(); ++m) {
    std::vector<double> e(d);
    for (std::size_t i = 0; i < d; ++i) e[i] = members[m][i] - members[0][i];
    for (const auto& o : ortho) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += e[i] * o[i];
      for (std::size_t i = 0; i < d; ++i) e[i] -= dot * o[i];
    }
    double norm = 0.0;
    for (const double v : e) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-9) continue;
    for (double& v : e) v /= norm;
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += dir[i] * e[i];
    for (std::size_t i = 0; i < d; ++i) dir[i] -= dot * e[i];
    ortho.push_back(std::move(e));
  }

  double alpha_max = 1.0;
  for (std::size_t i = 0; i < d; ++i) {
    if (dir[i] > 0.0) alpha_max = std::min(alpha_max, (1.0 - z[i]) / dir[i]);
    if (dir[i] < 0.0) alpha_max = std::min(alpha_max, -z[i] / dir[i]);
  }
  const auto at = [&](double alpha) {
    Image x(spec.shape);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = std::clamp(z[i] + alpha * dir[i], 0.0, 1.0);
    }
    return x;
  };
  const auto margin_at = [&](double alpha) {
    return clean_margin(zoo_eval(spec, at(alpha)), label);
  };
  double lo = 0.0;
  double hi = alpha_max;
  if (margin_at(lo) >= target || margin_at(hi) <= target) return std::nullopt;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (margin_at(mid) < target ? lo : hi) = mid;
  }
  Image x = at(hi);
  const LogitVector logits = zoo_eval(spec, x);
  if (argmax(logits.values) != label) return std::nullopt;
  return Instance{"", std::move(x), label, clean_margin(logits, label)};
}

}  // namespace

InstanceSet generate_instances(const ZooSpec& spec, int n, DifficultyProfile profile,
                               std::uint64_t seed, const ProfileCalibration& calibration) {
  if (n < 1) throw ContractViolation("generate_instances needs n >= 1");
  spec.validate();
  InstanceSet set{spec.id, profile, seed, {}};
  set.items.reserve(n);
  RngStream rng = fresh_rng(seed, "images");
  const auto* rbf = std::get_if<RbfParams>(&spec.params);
  if (!rbf && profile != DifficultyProfile::kUniform) {
    throw ConfigError("difficulty profile '" + std::string(to_string(profile)) +
                      "' needs an rbf zoo");
  }
  for (int i = 0; i < n; ++i) {
    std::optional<Instance> made;
    const double target = rbf ? draw_target_margin(profile, calibration, rng) : 0.0;
    for (int attempt = 0; attempt < kRetryCap && !made; ++attempt) {
      if (rbf) {
        const int label = static_cast<int>(rng.uniform_index(spec.num_classes));
        made = place_at_junction(spec, *rbf, calibration, label, target, rng);
      } else {
        Image x = uniform_image(spec.shape, rng);
        const LogitVector logits = zoo_eval(spec, x);
        const int label = argmax(logits.values);
        const double margin = clean_margin(logits, label);
        if (margin > 0.0) made = Instance{"", std::move(x), label, margin};
      }
    }
    if (!made) {
      throw GenerationError("could not generate instance " + std::to_string(i) +
                            " within " + std::to_string(kRetryCap) + " attempts");
    }
    made->id = spec.id + "/" + std::to_string(i);
    set.items.push_back(std::move(*made));
  }
  return set;
}

void save_instances(const InstanceSet& set, std::ostream& out) {
  out << kInstancesMagic << " v" << kFormatVersion << '\n'
      << "zoo " << set.zoo_id << '\n'
      << "profile " << to_string(set.profile) << '\n'
      << "seed " << set.seed << '\n'
      << "count " << set.items.size() << '\n';
  for (const auto& inst : set.items) {
    const Shape& s = inst.image.shape();
    out << "instance " << inst.id << ' ' << inst.label << ' '
        << detail::format_double(inst.clean_margin) << ' ' << s.height << ' '
        << s.width << ' ' << s.channels << '\n';
    detail::write_array(out, "pixels", inst.image.pixels());
  }
  out << "end\n";
}

InstanceSet load_instances(std::istream& in) {
  using detail::expect_keyword;
  using detail::expect_token;
  expect_keyword(in, std::string(kInstancesMagic));
  const std::string version = expect_token(in, "version");
  if (version != "v" + std::to_string(kFormatVersion)) {
    throw ConfigError("unsupported instance file version '" + version + "'");
  }
  InstanceSet set;
  expect_keyword(in, "zoo");
  set.zoo_id = expect_token(in, "zoo id");
  expect_keyword(in, "profile");
  set.profile = parse_profile(expect_token(in, "profile"));
  expect_keyword(in, "seed");
  set.seed = std::stoull(expect_token(in, "seed"));
  expect_keyword(in, "count");
  const auto count = std::stoull(expect_token(in, "count"));
  for (std::size_t i = 0; i < count; ++i) {
    expect_keyword(in, "instance");
    Instance inst;
    inst.id = expect_token(in, "instance id");
    inst.label = std::stoi(expect_token(in, "label"));
    inst.clean_margin = detail::parse_double(expect_token(in, "margin"));
    Shape s;
    s.height = std::stoi(expect_token(in, "height"));
    s.width = std::stoi(expect_token(in, "width"));
    s.channels = std::stoi(expect_token(in, "channels"));
    inst.image = Image(s, detail::read_array(in, "pixels"));
    set.items.push_back(std::move(inst));
  }
  expect_keyword(in, "end");
  return set;
}

InstanceSet load_instances(std::istream& in, const ZooSpec& spec) {
  InstanceSet set = load_instances(in);
  for (const auto& inst : set.items) {
    if (inst.image.shape() != spec.shape ||
        argmax(zoo_eval(spec, inst.image).values) != inst.label) {
      throw ConfigError("instance " + inst.id + " is not correctly classified by zoo " +
                        spec.id);
    }
  }
  return set;
}

void save_instances(const InstanceSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  save_instances(set, out);
  if (!out) throw ConfigError("failed writing " + path.string());
}

InstanceSet load_instances(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  return load_instances(in);
}

}  // namespace ots
