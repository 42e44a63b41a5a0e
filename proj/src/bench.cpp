#include "ots/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>
#include <tuple>

#include "json.hpp"
#include "ots/bridge.hpp"
#include "ots/rng.hpp"
#include "text_io.hpp"

namespace ots {

namespace {

using json = nlohmann::json;

template <typename T>
json optional_json(const std::optional<T>& value) {
  return value ? json(*value) : json(nullptr);
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* name) {
  const auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

std::string fmt(double v) { return detail::format_double(v); }
std::string fmt(std::int64_t v) { return std::to_string(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }

bool needs_oracle_class(ModeKind kind) {
  return kind == ModeKind::kOracle || kind == ModeKind::kOtsFixed ||
         kind == ModeKind::kOtsStability;
}

std::string run_key(const ExperimentConfig& cfg, const ModeSpec& mode,
                    const std::string& image_id, std::uint64_t seed) {
  RunRecord r;
  r.classifier_id = cfg.classifier_id;
  r.attack_id = cfg.attack.attack_id();
  r.mode_id = to_string(mode);
  r.image_id = image_id;
  r.seed = seed;
  r.sweep_point = cfg.sweep_point;
  return archive_key(r);
}

}  // namespace

// ---------------------------------------------------------------- archive

std::string encode_record(const RunRecord& r) {
  json j;
  j["schema"] = kArchiveSchemaVersion;
  j["classifier"] = r.classifier_id;
  j["attack"] = r.attack_id;
  j["mode"] = r.mode_id;
  j["image"] = r.image_id;
  j["sweep"] = r.sweep_point;
  j["seed"] = r.seed;
  j["label"] = r.true_label;
  j["success"] = r.success;
  j["iterations"] = r.iterations_used;
  j["queries"] = r.queries_used;
  j["budget"] = r.iteration_budget;
  j["lock_iteration"] = optional_json(r.lock_iteration);
  j["locked_class"] = optional_json(r.locked_class);
  j["oracle_class"] = optional_json(r.oracle_class);
  j["final_class"] = r.final_class;
  j["leader_switches"] = r.leader_switches;
  j["clean_ranking"] = r.clean_ranking;
  json trace = json::array();
  for (const auto& p : r.trace) {
    json point{{"i", p.iteration}, {"leader", p.leader}};
    if (!p.perturbation.empty()) point["delta"] = p.perturbation;
    trace.push_back(std::move(point));
  }
  j["trace"] = std::move(trace);
  return j.dump();
}

RunRecord decode_record(const std::string& line) {
  try {
    const json j = json::parse(line);
    const int schema = j.at("schema").get<int>();
    if (schema != kArchiveSchemaVersion) {
      throw ConfigError("unsupported archive schema " + std::to_string(schema));
    }
    RunRecord r;
    r.classifier_id = j.at("classifier").get<std::string>();
    r.attack_id = j.at("attack").get<std::string>();
    r.mode_id = j.at("mode").get<std::string>();
    r.image_id = j.at("image").get<std::string>();
    r.sweep_point = j.at("sweep").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.true_label = j.at("label").get<int>();
    r.success = j.at("success").get<bool>();
    r.iterations_used = j.at("iterations").get<std::int64_t>();
    r.queries_used = j.at("queries").get<std::int64_t>();
    r.iteration_budget = j.at("budget").get<std::int64_t>();
    r.lock_iteration = optional_field<std::int64_t>(j, "lock_iteration");
    r.locked_class = optional_field<int>(j, "locked_class");
    r.oracle_class = optional_field<int>(j, "oracle_class");
    r.final_class = j.at("final_class").get<int>();
    r.leader_switches = j.at("leader_switches").get<int>();
    r.clean_ranking = j.at("clean_ranking").get<std::vector<int>>();
    for (const auto& p : j.at("trace")) {
      TracePoint point;
      point.iteration = p.at("i").get<std::int64_t>();
      point.leader = p.at("leader").get<int>();
      if (p.contains("delta")) point.perturbation = p["delta"].get<std::vector<double>>();
      r.trace.push_back(std::move(point));
    }
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed archive record: ") + e.what());
  }
}

std::string archive_key(const RunRecord& r) {
  return r.classifier_id + "|" + r.attack_id + "|" + r.mode_id + "|" + r.image_id + "|" +
         std::to_string(r.seed) + "|" + r.sweep_point;
}

Archive::Archive(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw ConfigError("cannot read archive " + path_.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) {
      // Torn final line from an interrupted writer.
      std::filesystem::resize_file(path_, pos);
      break;
    }
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    RunRecord r;
    try {
      r = decode_record(line);
    } catch (const ConfigError& e) {
      throw ConfigError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!keys_.insert(archive_key(r)).second) {
      throw ConfigError(path_.string() + ":" + std::to_string(line_no) +
                        ": duplicate key " + archive_key(r));
    }
    records_.push_back(std::move(r));
  }
}

bool Archive::contains(const std::string& key) const {
  std::lock_guard lock(mutex_);
  return keys_.count(key) != 0;
}

void Archive::append(const RunRecord& record) {
  const std::string line = encode_record(record) + "\n";
  std::lock_guard lock(mutex_);
  if (!keys_.insert(archive_key(record)).second) {
    throw ContractViolation("archive already holds " + archive_key(record));
  }
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << line;
  out.flush();
  if (!out) throw std::runtime_error("failed writing archive " + path_.string());
  records_.push_back(record);
}

std::vector<RunRecord> Archive::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t Archive::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::vector<RunRecord> read_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("no archive at " + path.string());
  std::ifstream in(path);
  std::vector<RunRecord> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(decode_record(line));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ------------------------------------------------------------ experiments

void ExperimentConfig::validate() const {
  if (classifier_id.empty()) throw ConfigError("experiment needs a classifier id");
  if (!make_oracle) throw ConfigError("experiment needs a classifier source");
  if (images.empty()) throw ConfigError("experiment needs at least one image");
  if (modes.empty()) throw ConfigError("experiment needs at least one mode");
  if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (archive.empty()) throw ConfigError("experiment needs an archive path");
  attack.validate();
  if (attack.budget.iterations < 1) throw ConfigError("experiment budget must be positive");
  std::set<std::string> seen;
  for (const auto& m : modes) {
    if (!seen.insert(to_string(m)).second) {
      throw ConfigError("mode " + to_string(m) + " listed twice");
    }
    if (m.kind == ModeKind::kOtsFixed && m.param < 0) {
      throw ConfigError("ots-fixed needs T >= 0");
    }
    if (m.kind == ModeKind::kOtsStability && m.param < 1) {
      throw ConfigError("ots-stability needs S >= 1");
    }
  }
  std::set<std::string> ids;
  for (const auto& img : images) {
    if (!ids.insert(img.id).second) throw ConfigError("duplicate image id " + img.id);
  }
}

std::uint64_t image_seed(std::uint64_t experiment_seed, const std::string& image_id) {
  return fresh_rng(experiment_seed, "image-seed/" + image_id).next_u64();
}

LockPolicy resolve_policy(const ModeSpec& mode, std::uint64_t run_seed, int oracle_class) {
  switch (mode.kind) {
    case ModeKind::kUntargeted:
      return Untargeted{};
    case ModeKind::kOracle:
      if (oracle_class < 0) throw ContractViolation("oracle mode without an oracle class");
      return OracleTarget{oracle_class};
    case ModeKind::kOtsFixed:
      return FixedSwitch{mode.param};
    case ModeKind::kOtsStability:
      return RankStability{static_cast<int>(std::min<std::int64_t>(mode.param,
                                                                   RankStability::kNever))};
    case ModeKind::kRandomTarget:
      return RandomTarget{run_seed};
    case ModeKind::kCleanArgmax:
      return CleanArgmax{};
  }
  throw ContractViolation("unknown mode");
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  Archive archive(cfg.archive);

  struct Unit {
    const Instance* image;
    std::uint64_t seed;
  };
  std::vector<Unit> units;
  for (const auto exp_seed : cfg.seeds) {
    for (const auto& img : cfg.images) units.push_back({&img, image_seed(exp_seed, img.id)});
  }

  ExperimentSummary summary;
  std::mutex summary_mutex;
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    std::unique_ptr<ClassifierOracle> oracle;
    for (std::size_t u = next++; u < units.size(); u = next++) {
      const Unit& unit = units[u];
      std::vector<const ModeSpec*> missing;
      for (const auto& m : cfg.modes) {
        if (!archive.contains(run_key(cfg, m, unit.image->id, unit.seed))) missing.push_back(&m);
      }
      {
        std::lock_guard lock(summary_mutex);
        summary.skipped += cfg.modes.size() - missing.size();
      }
      if (missing.empty()) continue;

      const auto finish = [&](RunRecord rec, const ModeSpec& mode) {
        rec.classifier_id = cfg.classifier_id;
        rec.mode_id = to_string(mode);
        rec.image_id = unit.image->id;
        rec.sweep_point = cfg.sweep_point;
        archive.append(rec);
        std::lock_guard lock(summary_mutex);
        ++summary.written;
      };
      const auto report_failure = [&](const std::string& what) {
        std::lock_guard lock(summary_mutex);
        summary.failures.push_back(unit.image->id + " seed " + std::to_string(unit.seed) +
                                   ": " + what);
      };

      try {
        if (!oracle) oracle = cfg.make_oracle();
        const bool want_untargeted =
            std::any_of(missing.begin(), missing.end(),
                        [](const ModeSpec* m) { return m->kind == ModeKind::kUntargeted; });
        const bool want_oracle_class =
            std::any_of(missing.begin(), missing.end(),
                        [](const ModeSpec* m) { return needs_oracle_class(m->kind); });

        std::optional<ProbeResult> probe;
        std::optional<int> oracle_class;
        if (want_untargeted || want_oracle_class) {
          const ModeSpec untargeted{ModeKind::kUntargeted, 0};
          const std::string key = run_key(cfg, untargeted, unit.image->id, unit.seed);
          if (!want_untargeted && archive.contains(key)) {
            for (const auto& r : archive.records()) {
              if (archive_key(r) == key) oracle_class = r.oracle_class;
            }
          }
          if (!oracle_class) {
            probe = oracle_probe(cfg.attack, unit.image->image, unit.image->label, *oracle,
                                 unit.seed, cfg.run_options);
            oracle_class = probe->oracle_class;
          }
        }
        for (const ModeSpec* mode : missing) {
          RunRecord rec;
          if (mode->kind == ModeKind::kUntargeted) {
            rec = probe->probe;
          } else {
            rec = run_attack(cfg.attack,
                             resolve_policy(*mode, unit.seed, oracle_class.value_or(-1)),
                             unit.image->image, unit.image->label, *oracle, unit.seed,
                             cfg.run_options);
            if (needs_oracle_class(mode->kind)) rec.oracle_class = oracle_class;
          }
          finish(std::move(rec), *mode);
        }
      } catch (const BridgeError& e) {
        oracle.reset();  // the session is unusable; reconnect for the next unit
        report_failure(e.what());
      } catch (const std::exception& e) {
        report_failure(e.what());
      }
    }
  };

  const int n_workers = std::min<int>(cfg.workers, static_cast<int>(units.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::sort(summary.failures.begin(), summary.failures.end());
  return summary;
}

std::string sweep_label(SweepKind kind, std::int64_t value) {
  switch (kind) {
    case SweepKind::kStability:
      return "S=" + std::to_string(value);
    case SweepKind::kFixed:
      return "T=" + std::to_string(value);
    case SweepKind::kSeed:
      return "seed=" + std::to_string(value);
  }
  throw ContractViolation("unknown sweep kind");
}

std::vector<std::filesystem::path> run_ablation(const ExperimentConfig& config,
                                                const Sweep& sweep) {
  if (sweep.values.empty()) throw ConfigError("sweep needs at least one value");
  const ModeKind swept = sweep.kind == SweepKind::kStability ? ModeKind::kOtsStability
                                                             : ModeKind::kOtsFixed;
  if (sweep.kind != SweepKind::kSeed &&
      std::none_of(config.modes.begin(), config.modes.end(),
                   [&](const ModeSpec& m) { return m.kind == swept; })) {
    throw ConfigError(std::string("sweep needs an ") +
                      (swept == ModeKind::kOtsStability ? "ots-stability" : "ots-fixed") +
                      " mode");
  }
  std::vector<std::filesystem::path> out;
  for (const auto value : sweep.values) {
    ExperimentConfig point = config;
    point.sweep_point = sweep_label(sweep.kind, value);
    if (sweep.kind == SweepKind::kSeed) {
      if (value < 0) throw ConfigError("seed sweep values must be non-negative");
      point.seeds = {static_cast<std::uint64_t>(value)};
    } else {
      for (auto& m : point.modes) {
        if (m.kind == swept) m.param = value;
      }
    }
    point.archive = config.archive.parent_path() /
                    (config.archive.stem().string() + "." + point.sweep_point + ".jsonl");
    const ExperimentSummary s = run_experiment(point);
    if (!s.failures.empty()) {
      throw std::runtime_error("sweep point " + point.sweep_point + ": " +
                               std::to_string(s.failures.size()) + " runs failed; first: " +
                               s.failures.front());
    }
    out.push_back(point.archive);
  }
  return out;
}

// ---------------------------------------------------------------- reports

std::string Table::to_csv() const {
  const auto cell = [](const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string quoted = "\"";
    for (const char c : v) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + "\"";
  };
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + cell(columns[i]);
  out += "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + cell(row[i]);
    out += "\n";
  }
  return out;
}

const Table& Report::table(const std::string& name) const {
  for (const auto& t : tables) {
    if (t.name == name) return t;
  }
  throw ContractViolation("report has no table " + name);
}

Report build_report(const std::vector<RunRecord>& records, const ReportSpec& spec) {
  if (records.empty()) throw ConfigError("report needs a non-empty archive");

  using GroupKey = std::tuple<std::string, std::string, std::string>;
  std::map<GroupKey, std::map<std::string, std::vector<RunRecord>>> groups;
  for (const auto& r : records) {
    groups[{r.classifier_id, r.attack_id, r.sweep_point}][r.mode_id].push_back(r);
  }

  Table summary{"summary",
                {"classifier", "attack", "sweep", "mode", "n", "successes", "success_rate",
                 "success_lo", "success_hi", "censored_mean", "censored_lo", "censored_hi",
                 "budget", "locked", "lock_match_rate", "mean_lock_iteration"},
                {}};
  Table comparisons{"comparisons",
                    {"classifier", "attack", "sweep", "baseline", "mode", "n_pairs",
                     "censored_baseline", "censored_mode", "paired_n", "paired_baseline",
                     "paired_mode", "wilcoxon_n", "w_plus", "p_raw", "p_bonferroni",
                     "degenerate", "pearson_r", "pearson_p", "unpaired"},
                    {}};
  Table incomplete{"incomplete_pairs",
                   {"classifier", "attack", "sweep", "baseline", "mode", "key"},
                   {}};
  Table cdf{"cdf", {"classifier", "attack", "sweep", "mode", "threshold", "rate"}, {}};
  Table scatter{"scatter",
                {"classifier", "attack", "sweep", "mode", "image", "seed", "difficulty",
                 "savings"},
                {}};
  Table locks{"locks",
              {"classifier", "attack", "sweep", "mode", "image", "seed", "lock_iteration",
               "locked_class", "oracle_class", "match"},
              {}};
  Table overlap{"target_overlap", {"classifier", "attack", "sweep", "mode", "k", "rate"}, {}};
  Table histogram{"difficulty_histogram",
                  {"classifier", "attack", "sweep", "mode", "bin_lo", "bin_hi", "count"},
                  {}};
  Table zone{"medium_zone",
             {"classifier", "attack", "sweep", "mode", "zone_lo", "zone_hi", "mass",
              "ceiling_count"},
             {}};

  std::vector<double> raw_p;
  std::vector<std::size_t> p_rows;
  std::size_t incomplete_count = 0;

  for (const auto& [gkey, modes] : groups) {
    const auto& [classifier, attack, sweep] = gkey;
    const std::vector<std::string> prefix{classifier, attack, sweep};
    const auto row = [&](std::initializer_list<std::string> rest) {
      std::vector<std::string> r = prefix;
      r.insert(r.end(), rest);
      return r;
    };

    std::int64_t budget = -1;
    for (const auto& [mode, recs] : modes) {
      for (const auto& r : recs) {
        if (budget >= 0 && r.iteration_budget != budget) {
          throw ConfigError("mixed budgets in group " + classifier + "/" + attack + "/" + sweep);
        }
        budget = r.iteration_budget;
      }
    }

    std::vector<std::int64_t> grid = spec.cdf_grid;
    if (grid.empty()) {
      for (int s = 1; s <= 20; ++s) grid.push_back(budget * s / 20);
    }
    std::vector<std::int64_t> edges = spec.histogram_edges;
    if (edges.empty()) {
      for (int s = 0; s <= 10; ++s) edges.push_back(budget * s / 10);
    }
    const std::int64_t zlo = spec.zone_lo >= 0 ? spec.zone_lo : budget / 10;
    const std::int64_t zhi = spec.zone_hi >= 0 ? spec.zone_hi : budget * 9 / 10;

    for (const auto& [mode, recs] : modes) {
      std::vector<double> wins, costs;
      for (const auto& r : recs) {
        wins.push_back(r.success ? 1.0 : 0.0);
        costs.push_back(r.success ? static_cast<double>(r.iterations_used)
                                  : static_cast<double>(budget));
      }
      const Interval sci =
          bootstrap_ci(wins, 0.95, spec.bootstrap_resamples, spec.bootstrap_seed);
      const Interval cci =
          bootstrap_ci(costs, 0.95, spec.bootstrap_resamples, spec.bootstrap_seed);
      const LockMatch lm = lock_match_rate(recs);
      double lock_sum = 0.0;
      for (const auto& r : recs) {
        if (r.lock_iteration) lock_sum += static_cast<double>(*r.lock_iteration);
      }
      const auto successes = static_cast<std::size_t>(std::count(wins.begin(), wins.end(), 1.0));
      summary.rows.push_back(row(
          {mode, fmt(recs.size()), fmt(successes), fmt(success_rate(recs)), fmt(sci.lo),
           fmt(sci.hi), fmt(censored_mean(recs, budget)), fmt(cci.lo), fmt(cci.hi),
           fmt(budget), fmt(lm.locked), lm.locked ? fmt(lm.rate) : "",
           lm.locked ? fmt(lock_sum / lm.locked) : ""}));

      const auto curve = success_cdf(recs, grid);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        cdf.rows.push_back(row({mode, fmt(grid[i]), fmt(curve[i])}));
      }

      for (const auto& r : recs) {
        if (!r.locked_class) continue;
        locks.rows.push_back(row(
            {mode, r.image_id, std::to_string(r.seed), fmt(*r.lock_iteration),
             fmt(*r.locked_class), r.oracle_class ? fmt(*r.oracle_class) : "",
             r.oracle_class ? (*r.oracle_class == *r.locked_class ? "1" : "0") : ""}));
      }
      if (lm.locked > 0) {
        std::vector<int> ks;
        for (const int k : spec.overlap_k) {
          const bool fits = std::all_of(recs.begin(), recs.end(), [&](const RunRecord& r) {
            return !r.locked_class || static_cast<std::size_t>(k) <= r.clean_ranking.size();
          });
          if (fits) ks.push_back(k);
        }
        const auto rates = target_overlap(recs, ks);
        for (std::size_t i = 0; i < ks.size(); ++i) {
          overlap.rows.push_back(row({mode, fmt(ks[i]), fmt(rates[i])}));
        }
      }

      const DifficultyHistogram h = difficulty_histogram(recs, edges, zlo, zhi);
      for (std::size_t b = 0; b < h.counts.size(); ++b) {
        histogram.rows.push_back(
            row({mode, fmt(h.edges[b]), fmt(h.edges[b + 1]), fmt(h.counts[b])}));
      }
      histogram.rows.push_back(row({mode, "ceiling", "ceiling", fmt(h.ceiling_count)}));
      zone.rows.push_back(
          row({mode, fmt(zlo), fmt(zhi), fmt(h.medium_zone_mass), fmt(h.ceiling_count)}));
    }

    const auto base_it = modes.find(spec.baseline_mode);
    if (base_it == modes.end()) continue;
    const auto& base = base_it->second;
    for (const auto& [mode, recs] : modes) {
      if (mode == spec.baseline_mode) continue;
      const auto unpaired = unpaired_keys(base, recs);
      for (const auto& key : unpaired) {
        incomplete.rows.push_back(row({spec.baseline_mode, mode, key}));
      }
      incomplete_count += unpaired.size();

      std::set<std::string> common;
      {
        std::set<std::string> in_mode;
        for (const auto& r : recs) in_mode.insert(pairing_key(r));
        for (const auto& r : base) {
          if (in_mode.count(pairing_key(r))) common.insert(pairing_key(r));
        }
      }
      std::vector<RunRecord> a, b;
      for (const auto& r : base) {
        if (common.count(pairing_key(r))) a.push_back(r);
      }
      for (const auto& r : recs) {
        if (common.count(pairing_key(r))) b.push_back(r);
      }
      std::vector<std::string> cells{spec.baseline_mode, mode, fmt(common.size())};
      if (common.empty()) {
        cells.insert(cells.end(), {"", "", "0", "", "", "0", "", "", "", "", "", "",
                                   fmt(unpaired.size())});
        comparisons.rows.push_back(row({}));
        comparisons.rows.back().insert(comparisons.rows.back().end(), cells.begin(),
                                       cells.end());
        continue;
      }
      const PairedSample pairs = make_paired_sample(a, b, budget);
      const auto pm = paired_mean(a, b);
      const WilcoxonResult w = wilcoxon_signed_rank(pairs, spec.zeros);
      std::vector<double> savings(pairs.size());
      for (std::size_t i = 0; i < pairs.size(); ++i) savings[i] = pairs.a[i] - pairs.b[i];
      std::optional<PearsonResult> pr;
      if (pairs.size() >= 3) pr = pearson_r(pairs.a, savings);
      cells.insert(cells.end(),
                   {fmt(censored_mean(a, budget)), fmt(censored_mean(b, budget)),
                    pm ? fmt(pm->n_pairs) : "0", pm ? fmt(pm->mean_a) : "",
                    pm ? fmt(pm->mean_b) : "", fmt(w.n), fmt(w.w_plus), fmt(w.p_value), "",
                    w.degenerate ? "1" : "0", pr ? fmt(pr->r) : "", pr ? fmt(pr->p_value) : "",
                    fmt(unpaired.size())});
      comparisons.rows.push_back(row({}));
      comparisons.rows.back().insert(comparisons.rows.back().end(), cells.begin(), cells.end());
      raw_p.push_back(w.p_value);
      p_rows.push_back(comparisons.rows.size() - 1);

      std::map<std::string, const RunRecord*> by_key;
      for (const auto& r : a) by_key[pairing_key(r)] = &r;
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const RunRecord* r = by_key.at(pairs.keys[i]);
        scatter.rows.push_back(row({mode, r->image_id, std::to_string(r->seed),
                                    fmt(pairs.a[i]), fmt(savings[i])}));
      }
    }
  }

  const auto adjusted = bonferroni(raw_p);
  const auto p_col = static_cast<std::size_t>(
      std::find(comparisons.columns.begin(), comparisons.columns.end(), "p_bonferroni") -
      comparisons.columns.begin());
  for (std::size_t i = 0; i < p_rows.size(); ++i) {
    comparisons.rows[p_rows[i]][p_col] = fmt(adjusted[i]);
  }

  Report report;
  report.incomplete_pairs = incomplete_count;
  report.tables = {summary, comparisons, incomplete, cdf,       scatter,
                   locks,   overlap,     histogram,  zone};
  return report;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json all = json::object();
  for (const auto& t : report.tables) {
    std::ofstream csv(dir / (t.name + ".csv"));
    csv << t.to_csv();
    if (!csv) throw std::runtime_error("failed writing " + (dir / (t.name + ".csv")).string());
    json rows = json::array();
    for (const auto& r : t.rows) {
      json obj = json::object();
      for (std::size_t i = 0; i < t.columns.size() && i < r.size(); ++i) {
        double v = 0.0;
        const auto* first = r[i].data();
        const auto* last = first + r[i].size();
        const auto [ptr, ec] = std::from_chars(first, last, v);
        if (!r[i].empty() && ec == std::errc() && ptr == last) {
          obj[t.columns[i]] = v;
        } else {
          obj[t.columns[i]] = r[i];
        }
      }
      rows.push_back(std::move(obj));
    }
    all[t.name] = std::move(rows);
  }
  all["incomplete_pairs"] = report.incomplete_pairs;
  std::ofstream out(dir / "report.json");
  out << all.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing report.json");
}

// -------------------------------------------------------------- alignment

double AlignmentResult::terminal_gap() const {
  if (ots.mean.empty() || untargeted.mean.empty()) return 0.0;
  return ots.mean.back() - untargeted.mean.back();
}

AlignmentResult run_alignment(const AlignmentConfig& cfg) {
  if (!cfg.make_oracle) throw ConfigError("alignment needs a classifier source");
  if (cfg.images.empty()) throw ConfigError("alignment needs at least one image");
  cfg.attack.validate();
  if (cfg.ots_mode.kind != ModeKind::kOtsFixed && cfg.ots_mode.kind != ModeKind::kOtsStability) {
    throw ConfigError("alignment compares against an ots-fixed or ots-stability mode");
  }
  const std::int64_t horizon = cfg.attack.budget.iterations;
  RunOptions traced;
  traced.trace_perturbations = true;
  traced.trace_leaders = true;

  auto oracle = cfg.make_oracle();
  AlignmentResult result;
  std::vector<AlignmentTrace> unt_traces, ots_traces;
  double lock_sum = 0.0;
  std::size_t locks = 0;
  const auto deltas = [](const RunRecord& r) {
    std::vector<std::vector<double>> out;
    for (const auto& p : r.trace) out.push_back(p.perturbation);
    return out;
  };
  for (const auto& img : cfg.images) {
    const std::uint64_t seed = image_seed(cfg.seed, img.id);
    const ProbeResult probe =
        oracle_probe(cfg.attack, img.image, img.label, *oracle, seed, traced);
    const RunRecord targeted =
        run_attack(cfg.attack, OracleTarget{probe.oracle_class}, img.image, img.label,
                   *oracle, seed, traced);
    const std::vector<double>& oracle_dir = targeted.trace.back().perturbation;
    if (std::all_of(oracle_dir.begin(), oracle_dir.end(), [](double v) { return v == 0.0; })) {
      result.skipped.push_back(img.id);
      continue;
    }
    const RunRecord ots = run_attack(cfg.attack, resolve_policy(cfg.ots_mode, seed, -1),
                                     img.image, img.label, *oracle, seed, traced);
    unt_traces.push_back(alignment_trace(deltas(probe.probe), oracle_dir, horizon));
    ots_traces.push_back(alignment_trace(deltas(ots), oracle_dir, horizon));
    if (ots.lock_iteration) {
      lock_sum += static_cast<double>(*ots.lock_iteration);
      ++locks;
    }
  }
  result.images_used = unt_traces.size();
  result.untargeted = summarize_alignment(unt_traces);
  result.ots = summarize_alignment(ots_traces);
  result.mean_lock_iteration = locks ? lock_sum / locks : 0.0;
  return result;
}

Table alignment_table(const AlignmentResult& result) {
  Table t{"alignment", {"iteration", "untargeted_mean", "untargeted_std", "ots_mean", "ots_std"},
          {}};
  for (std::size_t i = 0; i < result.untargeted.mean.size(); ++i) {
    t.rows.push_back({fmt(i), fmt(result.untargeted.mean[i]), fmt(result.untargeted.stddev[i]),
                      fmt(result.ots.mean[i]), fmt(result.ots.stddev[i])});
  }
  return t;
}

}  // namespace ots
