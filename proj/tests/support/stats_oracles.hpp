#pragma once

// Brute-force reference implementations for the statistics tests.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ots/core.hpp"
#include "ots/rng.hpp"

namespace ots::testing {

inline RunRecord record(const char* image, bool success, std::int64_t iterations) {
  RunRecord r;
  r.classifier_id = "c";
  r.attack_id = "a";
  r.mode_id = "m";
  r.image_id = image;
  r.success = success;
  r.iterations_used = iterations;
  return r;
}

inline std::vector<RunRecord> random_records(RngStream& rng, std::size_t n, std::int64_t ceiling) {
  std::vector<RunRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = rng.uniform() < 0.6;
    out.push_back(record(std::to_string(i).c_str(), ok,
                         ok ? static_cast<std::int64_t>(rng.uniform_index(ceiling + 1)) : ceiling));
  }
  return out;
}

inline double brute_censored_mean(const std::vector<RunRecord>& rs, std::int64_t ceiling) {
  double s = 0;
  for (const auto& r : rs) s += r.success ? r.iterations_used : ceiling;
  return s / rs.size();
}

struct BruteMeans {
  double mean_a, mean_b;
  std::size_t n_pairs;
};

inline std::optional<BruteMeans> brute_paired_mean(const std::vector<RunRecord>& a,
                                                   const std::vector<RunRecord>& b) {
  double sa = 0, sb = 0;
  std::size_t n = 0;
  for (const auto& x : a) {
    for (const auto& y : b) {
      if (x.image_id == y.image_id && x.success && y.success) {
        sa += x.iterations_used;
        sb += y.iterations_used;
        ++n;
      }
    }
  }
  if (n == 0) return std::nullopt;
  return BruteMeans{sa / n, sb / n, n};
}

inline double brute_cdf_point(const std::vector<RunRecord>& rs, std::int64_t g) {
  std::size_t hits = 0;
  for (const auto& r : rs) hits += r.success && r.iterations_used <= g;
  return static_cast<double>(hits) / rs.size();
}

/// Two-sided signed-rank p by listing all 2^n sign assignments.
inline double brute_wilcoxon_p(const std::vector<double>& d, bool pratt) {
  std::vector<double> pool;
  for (const double v : d) {
    if (v != 0.0 || pratt) pool.push_back(v);
  }
  std::vector<double> ranks;
  for (const double v : pool) {
    if (v == 0.0) continue;
    double below = 0, equal = 0;
    for (const double w : pool) {
      below += std::abs(w) < std::abs(v);
      equal += std::abs(w) == std::abs(v);
    }
    ranks.push_back(below + (equal + 1.0) / 2.0);
  }
  const std::size_t n = ranks.size();
  if (n == 0) return 1.0;
  double total = 0, observed = 0;
  std::size_t k = 0;
  for (const double v : pool) {
    if (v == 0.0) continue;
    total += ranks[k];
    if (v > 0) observed += ranks[k];
    ++k;
  }
  const double mu = total / 2.0;
  const double dev = std::abs(observed - mu);
  std::uint64_t extreme = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1ULL << i)) w += ranks[i];
    }
    if (std::abs(w - mu) >= dev - 1e-9) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(1ULL << n);
}

inline double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = x.size();
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

}  // namespace ots::testing
