// ots_bench: experiment runner and report generator.
//
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ots/bench.hpp"
#include "ots/bridge.hpp"
#include "ots/objectives.hpp"
#include "ots/rng.hpp"
#include "ots/zoo.hpp"

namespace fs = std::filesystem;
using namespace ots;

namespace {

fs::path default_output_root() {
  if (const char* root = std::getenv("OTS_OUTPUT_ROOT"); root && *root) return root;
  return "ots-output";
}

struct SourceArgs {
  std::string zoo;
  std::string bridge;
  std::string classifier_id;
  int classes = 0;
  std::string returns = "logits";
  int timeout_ms = 10000;
  std::string instances;
  int images = 100;
  std::string profile = "medium-heavy";
  std::uint64_t image_seed = 0;

  void add(CLI::App* app, bool with_images = true) {
    app->add_option("--zoo", zoo, "zoo fixture file (from `zoo gen`)");
    app->add_option("--bridge", bridge, "sidecar endpoint: stdio:<command> or tcp:<host>:<port>");
    app->add_option("--classifier-id", classifier_id, "id stored in records (default: zoo id)");
    app->add_option("--classes", classes, "expected class count for --bridge");
    app->add_option("--returns", returns, "sidecar score kind for --bridge")
        ->check(CLI::IsMember({"logits", "probs"}));
    app->add_option("--timeout-ms", timeout_ms, "bridge request timeout")->capture_default_str();
    if (!with_images) return;
    app->add_option("--instances", instances, "instance fixture file");
    app->add_option("--images", images, "instances to generate when --instances is absent")
        ->capture_default_str();
    app->add_option("--profile", profile, "uniform | medium-heavy | bimodal")
        ->capture_default_str();
    app->add_option("--image-seed", image_seed, "instance generation seed")->capture_default_str();
  }

  BridgeConfig bridge_config() const {
    BridgeConfig cfg;
    parse_endpoint(bridge, cfg);
    cfg.num_classes = classes;
    cfg.returns = parse_score_kind(returns);
    cfg.timeout_ms = timeout_ms;
    cfg.validate();
    return cfg;
  }

  // Resolves the classifier and image set.
  void resolve(OracleFactory& factory, std::string& id, std::vector<Instance>& out) const {
    if (zoo.empty() == bridge.empty()) throw ConfigError("give exactly one of --zoo, --bridge");
    if (!zoo.empty()) {
      const auto spec = std::make_shared<ZooSpec>(load_zoo(fs::path(zoo)));
      factory = [spec] { return std::make_unique<ZooOracle>(*spec); };
      id = classifier_id.empty() ? spec->id : classifier_id;
      if (!instances.empty()) {
        std::ifstream in(instances);
        if (!in) throw ConfigError("cannot read " + instances);
        out = load_instances(in, *spec).items;
      } else {
        out = generate_instances(*spec, images, parse_profile(profile), image_seed).items;
      }
      return;
    }
    const BridgeConfig cfg = bridge_config();
    factory = [cfg] { return std::make_unique<BridgeOracle>(cfg); };
    if (classifier_id.empty()) throw ConfigError("--bridge needs --classifier-id");
    if (instances.empty()) throw ConfigError("--bridge needs --instances");
    id = classifier_id;
    out = load_instances(fs::path(instances)).items;
  }
};

struct AttackArgs {
  std::string attack = "simba";
  std::string loss;
  std::int64_t budget = 10000;
  double epsilon = 8.0 / 255.0;
  std::string simba_basis = "dct8";
  std::optional<double> simba_step;
  double square_p_init = 0.05;
  int bandits_downsample = 1;
  double bandits_exploration = 0.01;
  double bandits_fd = 0.01;
  double bandits_prior_lr = 0.1;
  std::optional<double> bandits_image_lr;
  bool bandits_strict = false;

  void add(CLI::App* app) {
    app->add_option("--attack", attack, "simba | square | bandits")->capture_default_str();
    app->add_option("--loss", loss, "prob | ce | margin (default per attack)");
    app->add_option("--budget", budget, "iteration budget")->capture_default_str();
    app->add_option("--epsilon", epsilon, "L-infinity radius")->capture_default_str();
    app->add_option("--simba-basis", simba_basis, "dct8 | pixel")->capture_default_str();
    app->add_option("--simba-step", simba_step, "SimBA step (default epsilon)");
    app->add_option("--square-p-init", square_p_init)->capture_default_str();
    app->add_option("--bandits-downsample", bandits_downsample)->capture_default_str();
    app->add_option("--bandits-exploration", bandits_exploration)->capture_default_str();
    app->add_option("--bandits-fd-scale", bandits_fd)->capture_default_str();
    app->add_option("--bandits-prior-lr", bandits_prior_lr)->capture_default_str();
    app->add_option("--bandits-image-lr", bandits_image_lr, "default epsilon / 10");
    app->add_flag("--bandits-strict", bandits_strict, "extra query per step to confirm success");
  }

  AttackConfig config() const {
    AttackConfig cfg = default_attack_config(parse_attack_kind(attack));
    if (!loss.empty()) cfg.loss = parse_loss_family(loss);
    cfg.budget.iterations = budget;
    cfg.budget.epsilon = epsilon;
    cfg.simba.basis = parse_basis_kind(simba_basis);
    cfg.simba.step_size = simba_step;
    cfg.square.p_init = square_p_init;
    cfg.bandits.prior_downsample = bandits_downsample;
    cfg.bandits.exploration = bandits_exploration;
    cfg.bandits.fd_scale = bandits_fd;
    cfg.bandits.prior_lr = bandits_prior_lr;
    cfg.bandits.image_lr = bandits_image_lr;
    cfg.bandits.strict_success_check = bandits_strict;
    cfg.validate();
    return cfg;
  }
};

struct RunArgs {
  SourceArgs source;
  AttackArgs attack;
  std::vector<std::string> modes{"untargeted", "oracle", "ots-stability"};
  std::optional<int> stability;
  std::vector<std::uint64_t> seeds{0};
  int workers = 1;
  std::string out;
  std::string name;

  void add(CLI::App* app) {
    source.add(app);
    attack.add(app);
    app->add_option("--modes", modes,
                    "untargeted, oracle, ots-fixed[:T], ots-stability[:S], random-target, "
                    "clean-argmax")
        ->delimiter(',')
        ->capture_default_str();
    app->add_option("--stability", stability,
                    "S for a bare ots-stability (default 10 simba, 8 square, 15 bandits)");
    app->add_option("--seeds", seeds, "experiment seeds")->delimiter(',')->capture_default_str();
    app->add_option("--workers", workers, "worker threads")->capture_default_str();
    app->add_option("--out", out, "output directory (default $OTS_OUTPUT_ROOT or ots-output)");
    app->add_option("--name", name, "archive name (default <classifier>.<attack>)");
  }

  ExperimentConfig config() const {
    ExperimentConfig cfg;
    source.resolve(cfg.make_oracle, cfg.classifier_id, cfg.images);
    cfg.attack = attack.config();
    const int s = stability.value_or(default_stability_threshold(attack.attack));
    for (const auto& m : modes) cfg.modes.push_back(parse_mode(m, s));
    cfg.seeds = seeds;
    cfg.workers = workers;
    const fs::path dir = out.empty() ? default_output_root() : fs::path(out);
    const std::string stem = name.empty() ? cfg.classifier_id + "." + cfg.attack.attack_id() : name;
    cfg.archive = dir / (stem + ".jsonl");
    cfg.validate();
    return cfg;
  }
};

int print_summary(const ExperimentSummary& s, const fs::path& archive) {
  std::cout << "archive " << archive.string() << ": " << s.written << " written, " << s.skipped
            << " already present, " << s.failures.size() << " failed\n";
  for (const auto& f : s.failures) std::cerr << "failed: " << f << "\n";
  return s.failures.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Opportunistic target selection benchmark for black-box attacks"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; command-line flags override it");
  app.get_config_ptr()->configurable(false);

  // run
  RunArgs run_args;
  auto* run = app.add_subcommand("run", "run an experiment into a JSON-lines archive");
  run_args.add(run);

  // ablate
  RunArgs ablate_args;
  std::string sweep_kind;
  std::vector<std::int64_t> sweep_values;
  auto* ablate = app.add_subcommand("ablate", "sweep S, T, or the experiment seed");
  ablate_args.add(ablate);
  ablate->add_option("--sweep", sweep_kind, "S | T | seed")
      ->required()
      ->check(CLI::IsMember({"S", "T", "seed"}));
  ablate->add_option("--values", sweep_values, "sweep values")->required()->delimiter(',');

  // report
  std::vector<std::string> report_archives;
  std::string report_out;
  ReportSpec report_spec;
  std::string zero_handling = "discard";
  auto* report = app.add_subcommand("report", "tables from one or more archives");
  report->add_option("archives", report_archives, "archive files")->required();
  report->add_option("--out", report_out, "output directory (default <root>/report)");
  report->add_option("--baseline", report_spec.baseline_mode)->capture_default_str();
  report->add_option("--zeros", zero_handling, "Wilcoxon zero handling: discard | pratt")
      ->check(CLI::IsMember({"discard", "pratt"}))
      ->capture_default_str();
  report->add_option("--resamples", report_spec.bootstrap_resamples)->capture_default_str();
  report->add_option("--bootstrap-seed", report_spec.bootstrap_seed)->capture_default_str();
  report->add_option("--cdf-grid", report_spec.cdf_grid)->delimiter(',');
  report->add_option("--histogram-edges", report_spec.histogram_edges)->delimiter(',');
  report->add_option("--zone-lo", report_spec.zone_lo);
  report->add_option("--zone-hi", report_spec.zone_hi);

  // align
  SourceArgs align_source;
  AttackArgs align_attack;
  align_attack.budget = 500;
  std::string align_mode = "ots-stability";
  std::uint64_t align_seed = 0;
  std::string align_out;
  auto* align = app.add_subcommand("align", "perturbation alignment with the oracle direction");
  align_source.add(align);
  align_attack.add(align);
  align->add_option("--ots-mode", align_mode, "ots-fixed[:T] | ots-stability[:S]")
      ->capture_default_str();
  align->add_option("--seed", align_seed)->capture_default_str();
  align->add_option("--out", align_out, "output directory");

  // zoo gen
  auto* zoo = app.add_subcommand("zoo", "synthetic classifier zoo");
  zoo->require_subcommand(1);
  auto* zoo_gen = zoo->add_subcommand("gen", "write a zoo fixture and optionally instances");
  std::string zoo_kind = "rbf", zoo_id, zoo_out, inst_out, inst_profile = "medium-heavy";
  int zoo_classes = 100, zoo_h = 16, zoo_w = 16, zoo_c = 1, per_class = 2, hidden = 32;
  int inst_count = 0;
  std::uint64_t zoo_seed = 7, inst_seed = 0;
  double gamma = 1.0, temperature = 1.0, weight_scale = 1.0;
  zoo_gen->add_option("--kind", zoo_kind, "rbf | linear | mlp1")
      ->check(CLI::IsMember({"rbf", "linear", "mlp1"}))
      ->capture_default_str();
  zoo_gen->add_option("--id", zoo_id, "zoo id (default <kind>-<seed>)");
  zoo_gen->add_option("--classes", zoo_classes)->capture_default_str();
  zoo_gen->add_option("--height", zoo_h)->capture_default_str();
  zoo_gen->add_option("--width", zoo_w)->capture_default_str();
  zoo_gen->add_option("--channels", zoo_c)->capture_default_str();
  zoo_gen->add_option("--seed", zoo_seed)->capture_default_str();
  zoo_gen->add_option("--per-class", per_class, "rbf prototypes per class")->capture_default_str();
  zoo_gen->add_option("--gamma", gamma, "rbf")->capture_default_str();
  zoo_gen->add_option("--temperature", temperature, "rbf")->capture_default_str();
  zoo_gen->add_option("--hidden", hidden, "mlp1")->capture_default_str();
  zoo_gen->add_option("--weight-scale", weight_scale, "linear, mlp1")->capture_default_str();
  zoo_gen->add_option("--out", zoo_out, "zoo fixture path")->required();
  zoo_gen->add_option("--instances", inst_count, "also generate this many instances");
  zoo_gen->add_option("--profile", inst_profile)->capture_default_str();
  zoo_gen->add_option("--image-seed", inst_seed)->capture_default_str();
  zoo_gen->add_option("--instances-out", inst_out, "instance fixture path");

  // bridge check
  auto* bridge = app.add_subcommand("bridge", "external scorer sidecars");
  bridge->require_subcommand(1);
  auto* bridge_check = bridge->add_subcommand("check", "handshake and score random images");
  SourceArgs check_source;
  check_source.add(bridge_check, false);
  int check_samples = 10, check_h = 16, check_w = 16, check_c = 1;
  std::uint64_t check_seed = 0;
  bridge_check->add_option("--samples", check_samples)->capture_default_str();
  bridge_check->add_option("--height", check_h)->capture_default_str();
  bridge_check->add_option("--width", check_w)->capture_default_str();
  bridge_check->add_option("--channels", check_c)->capture_default_str();
  bridge_check->add_option("--seed", check_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      const ExperimentConfig cfg = run_args.config();
      return print_summary(run_experiment(cfg), cfg.archive);
    }
    if (ablate->parsed()) {
      const ExperimentConfig cfg = ablate_args.config();
      Sweep sweep;
      sweep.kind = sweep_kind == "S"   ? SweepKind::kStability
                   : sweep_kind == "T" ? SweepKind::kFixed
                                       : SweepKind::kSeed;
      sweep.values = sweep_values;
      for (const auto& p : run_ablation(cfg, sweep)) std::cout << p.string() << "\n";
      return 0;
    }
    if (report->parsed()) {
      std::vector<RunRecord> records;
      for (const auto& a : report_archives) {
        auto part = read_archive(a);
        records.insert(records.end(), part.begin(), part.end());
      }
      report_spec.zeros = zero_handling == "pratt" ? ZeroHandling::kPratt : ZeroHandling::kDiscard;
      const Report rep = build_report(records, report_spec);
      const fs::path dir = report_out.empty() ? default_output_root() / "report" : fs::path(report_out);
      write_report(rep, dir);
      std::cout << "report written to " << dir.string() << " (" << rep.incomplete_pairs
                << " incomplete pairs)\n";
      std::cout << rep.table("summary").to_csv();
      if (rep.incomplete_pairs > 0) {
        std::cerr << "incomplete pairing: see incomplete_pairs.csv\n";
      }
      return 0;
    }
    if (align->parsed()) {
      AlignmentConfig cfg;
      std::string id;
      align_source.resolve(cfg.make_oracle, id, cfg.images);
      cfg.attack = align_attack.config();
      cfg.ots_mode = parse_mode(align_mode, default_stability_threshold(align_attack.attack));
      cfg.seed = align_seed;
      const AlignmentResult res = run_alignment(cfg);
      const fs::path dir = align_out.empty() ? default_output_root() : fs::path(align_out);
      fs::create_directories(dir);
      const Table t = alignment_table(res);
      std::ofstream(dir / "alignment.csv") << t.to_csv();
      std::cout << "images " << res.images_used << ", skipped " << res.skipped.size()
                << ", terminal cosine untargeted " << res.untargeted.mean.back() << " ots "
                << res.ots.mean.back() << ", gap " << res.terminal_gap()
                << ", mean lock iteration " << res.mean_lock_iteration << "\n"
                << "wrote " << (dir / "alignment.csv").string() << "\n";
      return 0;
    }
    if (zoo_gen->parsed()) {
      const Shape shape{zoo_h, zoo_w, zoo_c};
      const std::string id = zoo_id.empty() ? zoo_kind + "-" + std::to_string(zoo_seed) : zoo_id;
      ZooSpec spec = zoo_kind == "rbf"
                         ? make_rbf_zoo(id, zoo_classes, shape, zoo_seed, per_class, gamma, temperature)
                     : zoo_kind == "linear"
                         ? make_linear_zoo(id, zoo_classes, shape, zoo_seed, weight_scale)
                         : make_mlp_zoo(id, zoo_classes, shape, zoo_seed, hidden, weight_scale);
      save_zoo(spec, fs::path(zoo_out));
      std::cout << "wrote zoo " << spec.id << " to " << zoo_out << "\n";
      if (inst_count > 0) {
        if (inst_out.empty()) throw ConfigError("--instances needs --instances-out");
        const InstanceSet set =
            generate_instances(spec, inst_count, parse_profile(inst_profile), inst_seed);
        save_instances(set, fs::path(inst_out));
        std::cout << "wrote " << set.items.size() << " instances to " << inst_out << "\n";
      }
      return 0;
    }
    if (bridge_check->parsed()) {
      if (check_source.bridge.empty()) throw ConfigError("bridge check needs --bridge");
      std::optional<ZooSpec> reference;
      if (!check_source.zoo.empty()) reference = load_zoo(fs::path(check_source.zoo));
      BridgeOracle oracle(check_source.bridge_config());
      std::cout << "session: protocol " << oracle.session().version << ", K "
                << oracle.session().num_classes << ", " << to_string(oracle.session().kind)
                << "\n";
      const Shape shape = reference ? reference->shape : Shape{check_h, check_w, check_c};
      RngStream rng = fresh_rng(check_seed, "bridge-check");
      double worst = 0.0;
      for (int i = 0; i < check_samples; ++i) {
        Image x(shape);
        for (auto& v : x.pixels()) v = rng.uniform();
        const LogitVector got = oracle.score(x);
        if (!reference) continue;
        const LogitVector want = zoo_eval(*reference, x);
        for (std::size_t k = 0; k < got.size(); ++k) {
          const double expect = oracle.session().kind == ScoreKind::kLogits
                                    ? want[k]
                                    : log_prob(want, static_cast<int>(k));
          worst = std::max(worst, std::abs(got[k] - expect));
        }
      }
      std::cout << "scored " << check_samples << " images with " << oracle.queries()
                << " queries";
      if (reference) std::cout << ", max abs deviation from the zoo " << worst;
      std::cout << "\n";
      return oracle.queries() == check_samples ? 0 : 2;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
