#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "ots/rng.hpp"

using namespace ots;

TEST_SUITE("rng") {
  TEST_CASE("reference values for (0, \"attack\")") {
    // Computed with an independent big-integer implementation of
    // splitmix64 / FNV-1a / xoshiro256**.
    RngStream rng = fresh_rng(0, "attack");
    CHECK(rng.next_u64() == 0x5396154a30ce84c8ULL);
    CHECK(rng.next_u64() == 0x6db3cb00811dc23fULL);
    CHECK(rng.next_u64() == 0x74d54cd16e5d11d6ULL);
    CHECK(rng.next_u64() == 0x223f1b595b776754ULL);
    CHECK(rng.next_u64() == 0x8b1678ce6f69a7a0ULL);

    RngStream u = fresh_rng(0, "attack");
    CHECK(u.uniform() == 0.3265088373307723);
    CHECK(u.uniform() == 0.4285246731025074);
    CHECK(u.uniform() == 0.456379700785295);
  }

  TEST_CASE("reference values for (42, \"images\")") {
    RngStream rng = fresh_rng(42, "images");
    CHECK(rng.next_u64() == 0xeae942b24a905ee2ULL);
    CHECK(rng.next_u64() == 0x7e5ccd9892ad9bc6ULL);
    CHECK(rng.next_u64() == 0x6afad7cb010ec370ULL);
  }

  TEST_CASE("hash and mixer reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("attack") == 0xb138769a1af3a55dULL);
    std::uint64_t s = 0;
    CHECK(splitmix64(s) == 0xe220a8397b1dcdafULL);
  }

  TEST_CASE("equal seed and label give identical streams") {
    RngStream a = fresh_rng(42, "images");
    RngStream b = fresh_rng(42, "images");
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("labels separate streams") {
    RngStream a = fresh_rng(42, "images");
    RngStream b = fresh_rng(42, "attack");
    int same = 0;
    for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
  }

  TEST_CASE("uniform lies in [0, 1) and has mean near 1/2") {
    RngStream rng = fresh_rng(3, "test/uniform");
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  }

  TEST_CASE("uniform_index covers its range evenly") {
    RngStream rng = fresh_rng(5, "test/index");
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[rng.uniform_index(7)];
    for (const int c : counts) CHECK(std::abs(c - n / 7) < 500);  // ~5 sigma
    CHECK(rng.uniform_index(1) == 0);
  }

  TEST_CASE("normal draws have unit variance") {
    RngStream rng = fresh_rng(9, "test/normal");
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      sum += z;
      sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
  }

  TEST_CASE("shuffle yields a permutation") {
    RngStream rng = fresh_rng(1, "test/shuffle");
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    rng.shuffle(std::span<int>(v));
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
    CHECK_FALSE(std::is_sorted(v.begin(), v.end()));
  }
}
