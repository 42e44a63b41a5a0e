#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ots/core.hpp"

namespace ots {

// Run-level metrics. Rates are over all records (per-run pooling).

double success_rate(std::span<const RunRecord> records);

/// Mean iterations with failed runs charged `ceiling`.
double censored_mean(std::span<const RunRecord> records, std::int64_t ceiling);

/// Success rate at each iteration threshold (success within <= threshold).
std::vector<double> success_cdf(std::span<const RunRecord> records,
                                std::span<const std::int64_t> grid);

/// Pairing key shared by runs of different modes on the same input:
/// classifier | attack | image | seed.
std::string pairing_key(const RunRecord& record);

struct PairedSample {
  std::vector<std::string> keys;
  std::vector<double> a;
  std::vector<double> b;

  std::size_t size() const { return keys.size(); }
};

/// Censored iteration counts paired by pairing_key. Throws ContractViolation
/// when the key sets differ or contain duplicates.
PairedSample make_paired_sample(std::span<const RunRecord> records_a,
                                std::span<const RunRecord> records_b,
                                std::int64_t ceiling);

/// Keys present on one side only (both directions), for incomplete-pairing
/// reports.
std::vector<std::string> unpaired_keys(std::span<const RunRecord> records_a,
                                       std::span<const RunRecord> records_b);

struct PairedMeans {
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::size_t n_pairs = 0;
};

/// Mean iterations over pairs where both runs succeeded; nullopt when there
/// are none.
std::optional<PairedMeans> paired_mean(std::span<const RunRecord> records_a,
                                       std::span<const RunRecord> records_b);

enum class ZeroHandling { kDiscard, kPratt };

struct WilcoxonResult {
  double p_value = 1.0;   // two-sided
  double w_plus = 0.0;    // sum of ranks of positive differences
  std::size_t n = 0;      // differences ranked (after zero handling)
  bool exact = false;
  bool degenerate = false;  // every difference was zero
};

/// Two-sided Wilcoxon signed-rank test. Ties share average ranks. Exact null
/// distribution for n <= 25 (counted over all 2^n sign patterns by dynamic
/// programming on doubled ranks); above that, the normal approximation with
/// tie-corrected variance and a 0.5 continuity correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences,
                                    ZeroHandling zeros = ZeroHandling::kDiscard);
WilcoxonResult wilcoxon_signed_rank(const PairedSample& pairs,
                                    ZeroHandling zeros = ZeroHandling::kDiscard);

inline constexpr std::size_t kWilcoxonExactLimit = 25;

/// Normal-approximation p-value regardless of n; exposed for cross-checks.
double wilcoxon_normal_p(std::span<const double> differences,
                         ZeroHandling zeros = ZeroHandling::kDiscard);

/// min(1, m * p) for each of the m p-values.
std::vector<double> bonferroni(std::span<const double> p_values);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap interval for the mean. Resampling indices come from
/// fresh_rng(seed, "bootstrap"); quantiles interpolate linearly.
Interval bootstrap_ci(std::span<const double> values, double level = 0.95,
                      int resamples = 2000, std::uint64_t seed = 0);

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, Student t with n - 2 d.o.f.
  std::size_t n = 0;
};

/// nullopt when either variable has zero variance. Needs n >= 3.
std::optional<PearsonResult> pearson_r(std::span<const double> xs,
                                       std::span<const double> ys);

/// Cosine between x'(i) - x and the oracle direction for i = 0..horizon.
/// A zero perturbation scores 0. Runs shorter than the horizon hold their
/// final perturbation.
struct AlignmentTrace {
  std::vector<double> cosine;
  std::int64_t horizon = 0;
};

AlignmentTrace alignment_trace(std::span<const std::vector<double>> perturbations,
                               std::span<const double> oracle_direction,
                               std::int64_t horizon);

struct AlignmentSummary {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation
};

AlignmentSummary summarize_alignment(std::span<const AlignmentTrace> traces);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct LockMatch {
  double rate = 0.0;  // matched / locked; 0 when nothing locked
  std::size_t locked = 0;
  std::size_t matched = 0;
  std::size_t unlocked = 0;
};

/// Fraction of locked runs whose locked class equals their oracle class.
/// Unlocked runs are excluded from the denominator and counted separately.
LockMatch lock_match_rate(std::span<const RunRecord> records);

/// For each K in `top_k`, the fraction of locked runs whose locked class is
/// among the first K entries of the run's clean ranking.
std::vector<double> target_overlap(std::span<const RunRecord> records,
                                   std::span<const int> top_k);

struct DifficultyHistogram {
  std::vector<std::int64_t> edges;      // ascending bin edges
  std::vector<std::size_t> counts;      // [edges[i], edges[i+1]) successes
  std::size_t ceiling_count = 0;        // failures
  double medium_zone_mass = 0.0;        // fraction with iterations in zone
};

/// Histogram of successful runs' iterations over [edges[i], edges[i+1]);
/// failures land in the ceiling bin. The medium zone is the closed range
/// [zone_lo, zone_hi] over successful runs.
DifficultyHistogram difficulty_histogram(std::span<const RunRecord> records,
                                         std::span<const std::int64_t> edges,
                                         std::int64_t zone_lo,
                                         std::int64_t zone_hi);

double median(std::vector<double> values);

}  // namespace ots
