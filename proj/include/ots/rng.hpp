#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace ots {

/// xoshiro256** stream. The state is seeded from (seed, label): the label is
/// hashed with 64-bit FNV-1a, xor-ed into splitmix64(seed), and the result
/// drives four splitmix64 outputs that become the generator state. Integer,
/// bounded-integer, uniform-real and sign draws use only integer arithmetic
/// and exact conversions, so they reproduce across platforms and languages.
/// normal() goes through libm log/cos and is reproducible only where those
/// agree.
class RngStream {
 public:
  static constexpr std::string_view kAlgorithm = "xoshiro256**/splitmix64";

  RngStream(std::uint64_t seed, std::string_view label);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n), rejection-sampled so it is unbiased.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller; consumes two uniforms per draw.
  double normal();

  /// +1.0 or -1.0 with equal probability.
  double sign();

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
};

RngStream fresh_rng(std::uint64_t seed, std::string_view label);

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace ots
