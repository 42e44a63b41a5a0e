#include <cmath>
#include <vector>

#include "doctest.h"
#include "ots/objectives.hpp"
#include "ots/rng.hpp"

using namespace ots;

namespace {

LogitVector L(std::vector<double> v) { return LogitVector{std::move(v)}; }

}  // namespace

TEST_SUITE("objectives") {
  TEST_CASE("softmax of equal logits is uniform") {
    const ProbVector p = softmax(L({0, 0, 0}));
    for (const double v : p.values) CHECK(v == doctest::Approx(1.0 / 3.0));
  }

  TEST_CASE("softmax is stable for large logits") {
    const ProbVector p = softmax(L({1000, 0}));
    CHECK(std::isfinite(p[0]));
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(p[1] == doctest::Approx(0.0));
  }

  TEST_CASE("log-probability differences equal logit differences") {
    RngStream rng = fresh_rng(2, "test/softmax");
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> v(6);
      for (auto& x : v) x = 20.0 * (rng.uniform() - 0.5);
      const LogitVector f = L(v);
      double sum = 0.0;
      for (const double p : softmax(f).values) sum += p;
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      for (int a = 0; a < 6; ++a) {
        for (int b = 0; b < 6; ++b) {
          CHECK(std::abs((log_prob(f, a) - log_prob(f, b)) - (v[a] - v[b])) < 1e-9);
        }
      }
    }
  }

  TEST_CASE("softmax is monotone in each logit") {
    std::vector<double> v{0.3, -1.0, 2.0};
    const double before = softmax(L(v))[1];
    v[1] += 0.5;
    CHECK(softmax(L(v))[1] > before);
  }

  TEST_CASE("untargeted margin") {
    CHECK(eval_objective(Objective::untargeted(LossFamily::kMargin, 0), L({2, 1, 0})) == 1.0);
  }

  TEST_CASE("untargeted prob on uniform scores") {
    CHECK(eval_objective(Objective::untargeted(LossFamily::kProb, 0), L({0, 0, 0, 0})) ==
          doctest::Approx(0.25));
  }

  TEST_CASE("targeted margin") {
    CHECK(eval_objective(Objective::targeted(LossFamily::kMargin, 2, 0), L({2, 1, 0})) == 2.0);
  }

  TEST_CASE("loss families against direct formulas") {
    const LogitVector f = L({0.5, 2.0, -1.0, 1.5});
    const ProbVector p = softmax(f);
    CHECK(eval_objective(Objective::untargeted(LossFamily::kCrossEntropy, 1), f) ==
          doctest::Approx(std::log(p[1])));
    CHECK(eval_objective(Objective::targeted(LossFamily::kProb, 3, 1), f) ==
          doctest::Approx(-p[3]));
    CHECK(eval_objective(Objective::targeted(LossFamily::kCrossEntropy, 3, 1), f) ==
          doctest::Approx(-std::log(p[3])));
    CHECK(eval_objective(Objective::untargeted(LossFamily::kMargin, 1), f) ==
          doctest::Approx(0.5));
  }

  TEST_CASE("objective contracts") {
    CHECK_THROWS_AS(Objective::targeted(LossFamily::kProb, 1, 1), ContractViolation);
    CHECK_THROWS_AS(eval_objective(Objective::untargeted(LossFamily::kProb, 5), L({0, 1})),
                    ContractViolation);
    CHECK(parse_loss_family("ce") == LossFamily::kCrossEntropy);
    CHECK(parse_loss_family(to_string(LossFamily::kMargin)) == LossFamily::kMargin);
    CHECK_THROWS(parse_loss_family("hinge"));
  }

  TEST_CASE("leading non-true class") {
    CHECK(leading_non_true(ProbVector{{0.5, 0.3, 0.2}}, 0) == 1);
    CHECK(leading_non_true(ProbVector{{0.5, 0.25, 0.25}}, 0) == 1);
    CHECK(leading_non_true(ProbVector{{0.1, 0.9}}, 1) == 0);
  }

  TEST_CASE("class ranking") {
    const ProbVector p{{0.4, 0.3, 0.2, 0.1}};
    CHECK(class_ranking(p, 0, 2) == std::vector<int>{1, 2});
    CHECK(class_ranking(p, 0, 3) == std::vector<int>{1, 2, 3});
    CHECK(class_ranking(ProbVector{{0.25, 0.25, 0.25, 0.25}}, 2, 3) == std::vector<int>{0, 1, 3});
    CHECK_THROWS_AS(class_ranking(p, 0, 4), ContractViolation);
  }

  TEST_CASE("margin through log-probabilities equals margin through logits") {
    RngStream rng = fresh_rng(4, "test/margin");
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> v(5);
      for (auto& x : v) x = 10.0 * (rng.uniform() - 0.5);
      std::vector<double> logp(5);
      for (int k = 0; k < 5; ++k) logp[k] = log_prob(L(v), k);
      for (int y = 0; y < 5; ++y) {
        const auto u = Objective::untargeted(LossFamily::kMargin, y);
        CHECK(std::abs(eval_objective(u, L(v)) - eval_objective(u, L(logp))) < 1e-9);
      }
    }
  }

  TEST_CASE("decreasing targeted prob of the leader raises the top non-true prob") {
    // While t leads the non-true classes, a strict decrease of -P(t) means P(t)
    // rose, and P(t) is the non-true maximum before and after.
    RngStream rng = fresh_rng(6, "test/equivalence");
    int checked = 0;
    for (int trial = 0; trial < 2000; ++trial) {
      std::vector<double> v(4);
      for (auto& x : v) x = 4.0 * (rng.uniform() - 0.5);
      const int y = 0;
      const ProbVector before = softmax(L(v));
      const int t = leading_non_true(before, y);
      std::vector<double> w = v;
      for (auto& x : w) x += 0.3 * (rng.uniform() - 0.5);
      const ProbVector after = softmax(L(w));
      if (leading_non_true(after, y) != t) continue;
      const auto obj = Objective::targeted(LossFamily::kProb, t, y);
      if (eval_objective(obj, L(w)) < eval_objective(obj, L(v))) {
        ++checked;
        CHECK(after[t] > before[t]);
      }
    }
    CHECK(checked > 100);
  }
}
