#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "ots/controller.hpp"
#include "ots/core.hpp"
#include "ots/engines.hpp"
#include "ots/oracle.hpp"
#include "ots/runner.hpp"
#include "ots/stats.hpp"
#include "ots/zoo.hpp"

namespace ots {

// Run archive: JSON lines, one RunRecord per line.

inline constexpr int kArchiveSchemaVersion = 1;

std::string encode_record(const RunRecord& record);
/// Throws ConfigError on malformed lines or unknown schema versions.
RunRecord decode_record(const std::string& line);

/// classifier | attack | mode | image | seed | sweep point. Unique per archive.
std::string archive_key(const RunRecord& record);

/// Append-only archive file. Opening loads existing records; a torn final
/// line (no trailing newline, left by an interrupted writer) is dropped.
/// append() is safe to call from several threads.
class Archive {
 public:
  explicit Archive(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  bool contains(const std::string& key) const;
  void append(const RunRecord& record);
  std::vector<RunRecord> records() const;
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::vector<RunRecord> records_;
  std::set<std::string> keys_;
};

std::vector<RunRecord> read_archive(const std::filesystem::path& path);

// Experiments.

using OracleFactory = std::function<std::unique_ptr<ClassifierOracle>()>;

struct ExperimentConfig {
  std::string classifier_id;
  OracleFactory make_oracle;  // called once per worker
  std::vector<Instance> images;
  AttackConfig attack;
  std::vector<ModeSpec> modes;
  std::vector<std::uint64_t> seeds{0};  // experiment seeds
  std::string sweep_point;
  RunOptions run_options;
  int workers = 1;
  std::filesystem::path archive;

  void validate() const;
};

/// Attack seed of one image: the first draw of
/// fresh_rng(experiment_seed, "image-seed/<image id>").
std::uint64_t image_seed(std::uint64_t experiment_seed, const std::string& image_id);

/// Policy for a mode on one run. `oracle_class` is required for kOracle.
LockPolicy resolve_policy(const ModeSpec& mode, std::uint64_t run_seed, int oracle_class);

struct ExperimentSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;  // already in the archive
  std::vector<std::string> failures;  // runs that raised; resumable on rerun
};

/// Runs every (image, seed, mode) missing from the archive. Modes that need
/// the oracle class (oracle and the OTS modes) first run the untargeted
/// probe; its record doubles as the untargeted record. When the untargeted
/// record is already archived its oracle_class is reused instead.
ExperimentSummary run_experiment(const ExperimentConfig& config);

enum class SweepKind { kStability, kFixed, kSeed };

struct Sweep {
  SweepKind kind = SweepKind::kStability;
  std::vector<std::int64_t> values;
};

/// "S=8", "T=50", "seed=3".
std::string sweep_label(SweepKind kind, std::int64_t value);

/// One sub-archive per sweep value, named "<stem>.<label>.jsonl" next to
/// config.archive. Images and per-image seeds are shared across points.
std::vector<std::filesystem::path> run_ablation(const ExperimentConfig& config,
                                                const Sweep& sweep);

// Reports.

struct ReportSpec {
  std::string baseline_mode = "untargeted";
  std::vector<std::int64_t> cdf_grid;       // empty: 20 even steps up to the budget
  std::vector<int> overlap_k{1, 2, 3, 5, 10};
  std::vector<std::int64_t> histogram_edges;  // empty: 10 even bins over the budget
  std::int64_t zone_lo = -1;                  // negative: 10% of the budget
  std::int64_t zone_hi = -1;                  // negative: 90% of the budget
  int bootstrap_resamples = 2000;
  std::uint64_t bootstrap_seed = 0;
  ZeroHandling zeros = ZeroHandling::kDiscard;
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
};

struct Report {
  std::vector<Table> tables;
  std::size_t incomplete_pairs = 0;

  const Table& table(const std::string& name) const;
};

/// Throws ConfigError on an empty record set or on mixed budgets within a
/// (classifier, attack, sweep point) group.
Report build_report(const std::vector<RunRecord>& records, const ReportSpec& spec = {});

/// Writes <name>.csv per table and report.json with every table.
void write_report(const Report& report, const std::filesystem::path& dir);

// Alignment experiment.

struct AlignmentConfig {
  OracleFactory make_oracle;
  std::vector<Instance> images;
  AttackConfig attack;  // budget is the horizon
  ModeSpec ots_mode{ModeKind::kOtsStability, 10};
  std::uint64_t seed = 0;
};

struct AlignmentResult {
  AlignmentSummary untargeted;
  AlignmentSummary ots;
  std::size_t images_used = 0;
  std::vector<std::string> skipped;  // oracle run left the image unchanged
  double mean_lock_iteration = 0.0;

  double terminal_gap() const;
};

/// For every image: the untargeted probe yields the oracle class; a run
/// targeted at it from the start yields delta_oracle (its final
/// perturbation); untargeted and OTS runs are then traced against it.
AlignmentResult run_alignment(const AlignmentConfig& config);

Table alignment_table(const AlignmentResult& result);

}  // namespace ots
