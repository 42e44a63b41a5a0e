#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ots/objectives.hpp"
#include "ots/zoo.hpp"

using namespace ots;

TEST_SUITE("zoo") {
  TEST_CASE("linear zoo with zero weights gives uniform probabilities") {
    ZooSpec spec{"lin0", Shape{2, 2, 1}, 5, 0,
                 LinearSoftmaxParams{std::vector<double>(20, 0.0), std::vector<double>(5, 0.0)}};
    const ProbVector p = softmax(zoo_eval(spec, Image(Shape{2, 2, 1}, 0.3)));
    for (const double v : p.values) CHECK(v == doctest::Approx(0.2));
  }

  TEST_CASE("rbf: a prototype is classified as its class") {
    const ZooSpec spec = make_rbf_zoo("rbf", 12, Shape{8, 8, 1}, 4, 3, 2.0, 0.5);
    const auto& p = std::get<RbfParams>(spec.params);
    for (int c = 0; c < 12; ++c) {
      for (int j = 0; j < 3; ++j) {
        const std::size_t at = (static_cast<std::size_t>(c) * 3 + j) * 64;
        const Image x(Shape{8, 8, 1},
                      std::vector<double>(p.prototypes.begin() + at, p.prototypes.begin() + at + 64));
        const LogitVector f = zoo_eval(spec, x);
        CHECK(argmax(f.values) == c);
        CHECK(f[c] == 0.0);
      }
    }
    for (const double v : p.prototypes) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("rbf logits follow the nearest-prototype formula") {
    ZooSpec spec{"rbf-hand", Shape{1, 2, 1}, 2, 0,
                 RbfParams{2, 3.0, 2.0, {0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0}}};
    const LogitVector f = zoo_eval(spec, Image(Shape{1, 2, 1}, std::vector<double>{0.2, 0.1}));
    // class 0: min(0.05, 1.45) = 0.05; class 1: min(0.65, 0.85) = 0.65
    CHECK(f[0] == doctest::Approx(-3.0 * 0.05 / 2.0));
    CHECK(f[1] == doctest::Approx(-3.0 * 0.65 / 2.0));
  }

  TEST_CASE("mlp1 matches a hand-computed forward pass") {
    // Two pixels, identity first layer, hidden = 2.
    Mlp1Params m;
    m.hidden = 2;
    m.w1 = {1, 0, 0, 1};
    m.b1 = {0.1, -0.2};
    m.w2 = {1, -1, 0.5, 2};
    m.b2 = {0.0, 0.3};
    const ZooSpec spec{"mlp", Shape{1, 2, 1}, 2, 0, m};
    const LogitVector f = zoo_eval(spec, Image(Shape{1, 2, 1}, std::vector<double>{0.4, 0.7}));
    const double h0 = std::tanh(0.5), h1 = std::tanh(0.5);
    CHECK(f[0] == doctest::Approx(h0 - h1));
    CHECK(f[1] == doctest::Approx(0.5 * h0 + 2 * h1 + 0.3));
  }

  TEST_CASE("shape mismatch and invalid specs") {
    const ZooSpec spec = make_linear_zoo("lin", 4, Shape{2, 2, 1}, 1);
    CHECK_THROWS_AS(zoo_eval(spec, Image(Shape{3, 2, 1})), ContractViolation);
    ZooSpec bad = spec;
    std::get<LinearSoftmaxParams>(bad.params).weights.pop_back();
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("builders are deterministic in the seed") {
    const ZooSpec a = make_mlp_zoo("m", 6, Shape{4, 4, 1}, 9);
    const ZooSpec b = make_mlp_zoo("m", 6, Shape{4, 4, 1}, 9);
    const ZooSpec c = make_mlp_zoo("m", 6, Shape{4, 4, 1}, 10);
    const Image x(Shape{4, 4, 1}, 0.3);
    CHECK(zoo_eval(a, x) == zoo_eval(b, x));
    CHECK_FALSE(zoo_eval(a, x) == zoo_eval(c, x));
  }

  TEST_CASE("one generated instance is correctly classified") {
    for (const ZooSpec& spec : {make_rbf_zoo("r", 10, Shape{8, 8, 1}, 1, 2, 4.0),
                                make_linear_zoo("l", 10, Shape{4, 4, 1}, 1),
                                make_mlp_zoo("m", 10, Shape{4, 4, 1}, 1)}) {
      const InstanceSet set = generate_instances(spec, 1, DifficultyProfile::kUniform, 5);
      REQUIRE(set.items.size() == 1);
      CHECK(argmax(zoo_eval(spec, set.items[0].image).values) == set.items[0].label);
    }
  }

  TEST_CASE("generation is deterministic and hits the profile margins") {
    const ZooSpec spec = make_rbf_zoo("r", 30, Shape{8, 8, 1}, 2, 2, 4.0);
    const InstanceSet a = generate_instances(spec, 10, DifficultyProfile::kMediumHeavy, 8);
    const InstanceSet b = generate_instances(spec, 10, DifficultyProfile::kMediumHeavy, 8);
    const ProfileCalibration cal;
    for (std::size_t i = 0; i < a.items.size(); ++i) {
      CHECK(a.items[i].image == b.items[i].image);
      CHECK(a.items[i].label == b.items[i].label);
      const double m = clean_margin(zoo_eval(spec, a.items[i].image), a.items[i].label);
      CHECK(m == doctest::Approx(a.items[i].clean_margin));
      CHECK(m >= cal.medium_lo - 1e-6);
      CHECK(m <= cal.medium_hi + 1e-6);
    }
    const InstanceSet bi = generate_instances(spec, 20, DifficultyProfile::kBimodal, 8);
    int easy = 0, hard = 0;
    for (const auto& inst : bi.items) {
      easy += inst.clean_margin <= cal.easy_hi + 1e-6;
      hard += inst.clean_margin >= cal.hard_lo - 1e-6;
    }
    CHECK(easy + hard == 20);
    CHECK(easy > 0);
    CHECK(hard > 0);
  }

  TEST_CASE("unreachable margins raise a generation error") {
    const ZooSpec spec = make_rbf_zoo("r", 10, Shape{8, 8, 1}, 2, 2, 4.0);
    ProfileCalibration cal;
    cal.medium_lo = 1e6;
    cal.medium_hi = 2e6;
    CHECK_THROWS_AS(generate_instances(spec, 1, DifficultyProfile::kMediumHeavy, 1, cal),
                    GenerationError);
  }

  TEST_CASE("non-rbf zoos support only the uniform profile") {
    const ZooSpec spec = make_linear_zoo("l", 10, Shape{4, 4, 1}, 1);
    CHECK_THROWS_AS(generate_instances(spec, 1, DifficultyProfile::kBimodal, 1), ConfigError);
  }

  TEST_CASE("zoo fixture round trip is exact") {
    for (const ZooSpec& spec : {make_rbf_zoo("r", 7, Shape{8, 8, 2}, 3, 2, 1.5, 0.7),
                                make_linear_zoo("l", 5, Shape{3, 3, 1}, 3),
                                make_mlp_zoo("m", 5, Shape{3, 3, 1}, 3, 4)}) {
      std::stringstream ss;
      save_zoo(spec, ss);
      const ZooSpec back = load_zoo(ss);
      CHECK(back.id == spec.id);
      CHECK(back.kind() == spec.kind());
      CHECK(back.seed == spec.seed);
      CHECK(back.shape == spec.shape);
      const Image x(spec.shape, 0.37);
      CHECK(zoo_eval(back, x) == zoo_eval(spec, x));
    }
  }

  TEST_CASE("zoo fixture rejects bad headers") {
    std::stringstream wrong("ots-zoo v9\n");
    CHECK_THROWS_AS(load_zoo(wrong), ConfigError);
    std::stringstream junk("hello\n");
    CHECK_THROWS(load_zoo(junk));
  }

  TEST_CASE("instance fixture round trip and re-check") {
    const ZooSpec spec = make_rbf_zoo("r", 10, Shape{8, 8, 1}, 2, 2, 4.0);
    const InstanceSet set = generate_instances(spec, 3, DifficultyProfile::kUniform, 4);
    std::stringstream ss;
    save_instances(set, ss);
    const std::string text = ss.str();
    std::stringstream in(text);
    const InstanceSet back = load_instances(in, spec);
    REQUIRE(back.items.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back.items[i].image == set.items[i].image);
      CHECK(back.items[i].id == set.items[i].id);
      CHECK(back.items[i].clean_margin == set.items[i].clean_margin);
    }
    const ZooSpec other = make_rbf_zoo("r2", 10, Shape{8, 8, 1}, 99, 2, 4.0);
    std::stringstream again(text);
    bool any_wrong = false;
    for (const auto& inst : set.items) {
      any_wrong |= argmax(zoo_eval(other, inst.image).values) != inst.label;
    }
    if (any_wrong) CHECK_THROWS_AS(load_instances(again, other), ConfigError);
  }
}
