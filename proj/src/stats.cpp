#include "ots/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "ots/rng.hpp"

namespace ots {

namespace {

double censored_iterations(const RunRecord& r, std::int64_t ceiling) {
  return r.success ? static_cast<double>(r.iterations_used)
                   : static_cast<double>(ceiling);
}

std::map<std::string, const RunRecord*> index_by_key(std::span<const RunRecord> records) {
  std::map<std::string, const RunRecord*> out;
  for (const auto& r : records) {
    if (!out.emplace(pairing_key(r), &r).second) {
      throw ContractViolation("duplicate pairing key " + pairing_key(r));
    }
  }
  return out;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * (sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - lo;
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct SignedRanks {
  std::vector<long long> doubled;  // 2 * rank of each used difference
  std::vector<bool> positive;
};

SignedRanks signed_ranks(std::span<const double> differences, ZeroHandling zeros) {
  std::vector<double> pool;
  for (const double d : differences) {
    if (!std::isfinite(d)) throw ContractViolation("non-finite difference");
    if (d != 0.0 || zeros == ZeroHandling::kPratt) pool.push_back(d);
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(pool[a]) < std::abs(pool[b]);
  });
  SignedRanks out;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           std::abs(pool[order[j + 1]]) == std::abs(pool[order[i]])) {
      ++j;
    }
    // Positions i..j (1-based i+1..j+1) share the average rank.
    const long long doubled = static_cast<long long>(i + 1) + static_cast<long long>(j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      const double d = pool[order[k]];
      if (d == 0.0) continue;  // Pratt: zeros take part in ranking only
      out.doubled.push_back(doubled);
      out.positive.push_back(d > 0.0);
    }
    i = j + 1;
  }
  return out;
}

double normal_p(const SignedRanks& ranks) {
  double mean = 0.0;
  double var = 0.0;
  double w = 0.0;
  for (std::size_t i = 0; i < ranks.doubled.size(); ++i) {
    const double r = ranks.doubled[i] / 2.0;
    mean += r / 2.0;
    var += r * r / 4.0;
    if (ranks.positive[i]) w += r;
  }
  if (var <= 0.0) return 1.0;
  const double z = std::max(0.0, std::abs(w - mean) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

double success_rate(std::span<const RunRecord> records) {
  if (records.empty()) throw ContractViolation("success_rate of no records");
  const auto wins = std::count_if(records.begin(), records.end(),
                                  [](const RunRecord& r) { return r.success; });
  return static_cast<double>(wins) / records.size();
}

double censored_mean(std::span<const RunRecord> records, std::int64_t ceiling) {
  if (records.empty()) throw ContractViolation("censored_mean of no records");
  double sum = 0.0;
  for (const auto& r : records) sum += censored_iterations(r, ceiling);
  return sum / records.size();
}

std::vector<double> success_cdf(std::span<const RunRecord> records,
                                std::span<const std::int64_t> grid) {
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw ContractViolation("success_cdf grid must be ascending");
  }
  std::vector<double> curve;
  curve.reserve(grid.size());
  if (grid.empty()) return curve;
  if (records.empty()) throw ContractViolation("success_cdf of no records");
  std::vector<std::int64_t> hits;
  for (const auto& r : records) {
    if (r.success) hits.push_back(r.iterations_used);
  }
  std::sort(hits.begin(), hits.end());
  for (const auto g : grid) {
    const auto count = std::upper_bound(hits.begin(), hits.end(), g) - hits.begin();
    curve.push_back(static_cast<double>(count) / records.size());
  }
  return curve;
}

std::string pairing_key(const RunRecord& r) {
  return r.classifier_id + "|" + r.attack_id + "|" + r.image_id + "|" +
         std::to_string(r.seed);
}

PairedSample make_paired_sample(std::span<const RunRecord> records_a,
                                std::span<const RunRecord> records_b,
                                std::int64_t ceiling) {
  const auto a = index_by_key(records_a);
  const auto b = index_by_key(records_b);
  if (a.size() != b.size() ||
      !std::equal(a.begin(), a.end(), b.begin(),
                  [](const auto& x, const auto& y) { return x.first == y.first; })) {
    throw ContractViolation("paired samples have mismatched pairing keys");
  }
  PairedSample out;
  for (const auto& [key, ra] : a) {
    out.keys.push_back(key);
    out.a.push_back(censored_iterations(*ra, ceiling));
    out.b.push_back(censored_iterations(*b.at(key), ceiling));
  }
  return out;
}

std::vector<std::string> unpaired_keys(std::span<const RunRecord> records_a,
                                       std::span<const RunRecord> records_b) {
  std::set<std::string> a, b;
  for (const auto& r : records_a) a.insert(pairing_key(r));
  for (const auto& r : records_b) b.insert(pairing_key(r));
  std::vector<std::string> out;
  std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(),
                                std::back_inserter(out));
  return out;
}

std::optional<PairedMeans> paired_mean(std::span<const RunRecord> records_a,
                                       std::span<const RunRecord> records_b) {
  const auto a = index_by_key(records_a);
  const auto b = index_by_key(records_b);
  if (a.size() != b.size()) {
    throw ContractViolation("paired_mean: mismatched pairing keys");
  }
  PairedMeans out;
  for (const auto& [key, ra] : a) {
    const auto it = b.find(key);
    if (it == b.end()) throw ContractViolation("paired_mean: missing key " + key);
    if (ra->success && it->second->success) {
      out.mean_a += static_cast<double>(ra->iterations_used);
      out.mean_b += static_cast<double>(it->second->iterations_used);
      ++out.n_pairs;
    }
  }
  if (out.n_pairs == 0) return std::nullopt;
  out.mean_a /= out.n_pairs;
  out.mean_b /= out.n_pairs;
  return out;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences,
                                    ZeroHandling zeros) {
  const SignedRanks ranks = signed_ranks(differences, zeros);
  WilcoxonResult out;
  out.n = ranks.doubled.size();
  if (out.n == 0) {
    out.degenerate = true;
    out.p_value = 1.0;
    return out;
  }
  long long total = 0;
  long long w2 = 0;
  for (std::size_t i = 0; i < out.n; ++i) {
    total += ranks.doubled[i];
    if (ranks.positive[i]) w2 += ranks.doubled[i];
  }
  out.w_plus = w2 / 2.0;
  if (out.n > kWilcoxonExactLimit) {
    out.p_value = normal_p(ranks);
    return out;
  }
  // counts[s]: sign patterns whose positive doubled ranks sum to s.
  std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
  counts[0] = 1.0;
  long long reach = 0;
  for (const long long r : ranks.doubled) {
    for (long long s = reach; s >= 0; --s) {
      if (counts[s] != 0.0) counts[s + r] += counts[s];
    }
    reach += r;
  }
  const long long observed = std::llabs(2 * w2 - total);
  double extreme = 0.0;
  for (long long s = 0; s <= total; ++s) {
    if (std::llabs(2 * s - total) >= observed) extreme += counts[s];
  }
  out.exact = true;
  out.p_value = std::min(1.0, std::ldexp(extreme, -static_cast<int>(out.n)));
  return out;
}

WilcoxonResult wilcoxon_signed_rank(const PairedSample& pairs, ZeroHandling zeros) {
  std::vector<double> diffs(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) diffs[i] = pairs.a[i] - pairs.b[i];
  return wilcoxon_signed_rank(diffs, zeros);
}

double wilcoxon_normal_p(std::span<const double> differences, ZeroHandling zeros) {
  const SignedRanks ranks = signed_ranks(differences, zeros);
  return ranks.doubled.empty() ? 1.0 : normal_p(ranks);
}

std::vector<double> bonferroni(std::span<const double> p_values) {
  std::vector<double> out;
  out.reserve(p_values.size());
  const double m = static_cast<double>(p_values.size());
  for (const double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractViolation("p-value outside [0, 1]");
    out.push_back(std::min(1.0, m * p));
  }
  return out;
}

Interval bootstrap_ci(std::span<const double> values, double level, int resamples,
                      std::uint64_t seed) {
  if (values.empty()) throw ContractViolation("bootstrap_ci of no values");
  if (!(level > 0.0 && level < 1.0)) throw ContractViolation("level must be in (0, 1)");
  if (resamples < 1) throw ContractViolation("need at least one resample");
  RngStream rng = fresh_rng(seed, "bootstrap");
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      sum += values[rng.uniform_index(values.size())];
    }
    m = sum / values.size();
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  return Interval{quantile_sorted(means, tail), quantile_sorted(means, 1.0 - tail)};
}

std::optional<PearsonResult> pearson_r(std::span<const double> xs,
                                       std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ContractViolation("pearson_r: length mismatch");
  const std::size_t n = xs.size();
  if (n < 3) throw ContractViolation("pearson_r needs n >= 3");
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  PearsonResult out;
  out.n = n;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(n - 2);
  if (std::abs(out.r) >= 1.0) {
    out.p_value = 0.0;
  } else if (dof > 0) {
    const double t = out.r * std::sqrt(dof / (1.0 - out.r * out.r));
    const boost::math::students_t dist(dof);
    out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractViolation("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

AlignmentTrace alignment_trace(std::span<const std::vector<double>> perturbations,
                               std::span<const double> oracle_direction,
                               std::int64_t horizon) {
  if (std::all_of(oracle_direction.begin(), oracle_direction.end(),
                  [](double v) { return v == 0.0; })) {
    throw ContractViolation("alignment_trace: zero oracle direction");
  }
  if (perturbations.empty()) throw ContractViolation("alignment_trace: empty run");
  if (horizon < 0) throw ContractViolation("alignment_trace: negative horizon");
  AlignmentTrace out;
  out.horizon = horizon;
  out.cosine.reserve(horizon + 1);
  for (std::int64_t i = 0; i <= horizon; ++i) {
    const auto at = std::min<std::size_t>(i, perturbations.size() - 1);
    out.cosine.push_back(cosine_similarity(perturbations[at], oracle_direction));
  }
  return out;
}

AlignmentSummary summarize_alignment(std::span<const AlignmentTrace> traces) {
  AlignmentSummary out;
  if (traces.empty()) return out;
  const std::size_t len = traces.front().cosine.size();
  for (const auto& t : traces) {
    if (t.cosine.size() != len) throw ContractViolation("alignment traces differ in horizon");
  }
  out.mean.assign(len, 0.0);
  out.stddev.assign(len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    double sum = 0.0;
    for (const auto& t : traces) sum += t.cosine[i];
    const double mean = sum / traces.size();
    double var = 0.0;
    for (const auto& t : traces) var += (t.cosine[i] - mean) * (t.cosine[i] - mean);
    out.mean[i] = mean;
    out.stddev[i] = std::sqrt(var / traces.size());
  }
  return out;
}

LockMatch lock_match_rate(std::span<const RunRecord> records) {
  LockMatch out;
  for (const auto& r : records) {
    if (!r.locked_class) {
      ++out.unlocked;
      continue;
    }
    ++out.locked;
    if (r.oracle_class && *r.oracle_class == *r.locked_class) ++out.matched;
  }
  out.rate = out.locked == 0 ? 0.0 : static_cast<double>(out.matched) / out.locked;
  return out;
}

std::vector<double> target_overlap(std::span<const RunRecord> records,
                                   std::span<const int> top_k) {
  std::vector<double> out;
  for (const int k : top_k) {
    if (k < 1) throw ContractViolation("target_overlap: K must be >= 1");
    std::size_t locked = 0, hits = 0;
    for (const auto& r : records) {
      if (!r.locked_class) continue;
      if (static_cast<std::size_t>(k) > r.clean_ranking.size()) {
        throw ContractViolation("target_overlap: record " + r.image_id +
                                " carries a clean ranking shorter than K");
      }
      ++locked;
      const auto end = r.clean_ranking.begin() + k;
      if (std::find(r.clean_ranking.begin(), end, *r.locked_class) != end) ++hits;
    }
    out.push_back(locked == 0 ? 0.0 : static_cast<double>(hits) / locked);
  }
  return out;
}

DifficultyHistogram difficulty_histogram(std::span<const RunRecord> records,
                                         std::span<const std::int64_t> edges,
                                         std::int64_t zone_lo, std::int64_t zone_hi) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) {
    throw ContractViolation("difficulty_histogram needs >= 2 ascending edges");
  }
  DifficultyHistogram out;
  out.edges.assign(edges.begin(), edges.end());
  out.counts.assign(edges.size() - 1, 0);
  std::size_t in_zone = 0;
  for (const auto& r : records) {
    if (!r.success) {
      ++out.ceiling_count;
      continue;
    }
    const auto it = std::upper_bound(edges.begin(), edges.end(), r.iterations_used);
    if (it != edges.begin() && it != edges.end()) {
      ++out.counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    }
    if (r.iterations_used >= zone_lo && r.iterations_used <= zone_hi) ++in_zone;
  }
  out.medium_zone_mass =
      records.empty() ? 0.0 : static_cast<double>(in_zone) / records.size();
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractViolation("median of no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace ots
