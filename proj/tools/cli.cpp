#include "cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "sharediff/diffusion.hpp"
#include "sharediff/embedding.hpp"
#include "sharediff/errors.hpp"
#include "sharediff/hierarchy.hpp"
#include "sharediff/io_util.hpp"
#include "sharediff/metrics.hpp"
#include "sharediff/planner.hpp"
#include "sharediff/serialize.hpp"

namespace sharediff::cli {
namespace {

namespace fs = std::filesystem;

struct CliConfig {
  std::string input;
  std::string tree_path;
  std::string output;
  std::string metrics_path;
  std::string world_path;
  std::string cache_dir;
  int K = 40;
  double tau = 1.0;
  std::string phi = "main";
  std::string schedule = "cosine";
  std::string variant = "deterministic";
  std::uint64_t seed = 0;
  bool normalize = false;
  std::string ablation;
  std::vector<double> sweep;
  int threads = 0;
  bool standard = false;

  // synthetic generator
  std::size_t clusters = 4;
  std::size_t per_cluster = 4;
  std::size_t dimension = 16;
  double jitter = 0.05;
  std::string format = "jsonl";
};

// Which flags the user set explicitly; those override the world config.
struct Overrides {
  CLI::Option* k = nullptr;
  CLI::Option* schedule = nullptr;
  CLI::Option* variant = nullptr;
  CLI::Option* seed = nullptr;
};

void add_input(CLI::App* cmd, CliConfig& c) {
  cmd->add_option("--input", c.input, "Prompt embeddings (JSONL or SHDF binary)");
  cmd->add_flag("--normalize", c.normalize, "L2-normalize embeddings at ingestion");
  cmd->add_option("--ablation", c.ablation, "Ablation mode")
      ->check(CLI::IsMember({"random-encodings"}));
  cmd->add_option("--cache-dir", c.cache_dir, "Directory for cached trees and plans");
}

void add_plan_options(CLI::App* cmd, CliConfig& c, Overrides& o) {
  cmd->add_option("--tree", c.tree_path, "Tree JSON produced by `tree` (instead of --input)");
  o.k = cmd->add_option("--k", c.K, "Total diffusion steps K")->check(CLI::PositiveNumber);
  cmd->add_option("--tau", c.tau, "Specialization hyperparameter tau")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--phi", c.phi, "Threshold schedule")->check(CLI::IsMember({"main", "appendix"}));
}

void add_world_options(CLI::App* cmd, CliConfig& c, Overrides& o) {
  cmd->add_option("--world", c.world_path, "World config JSON");
  o.schedule = cmd->add_option("--schedule", c.schedule, "Noise schedule curve")
                   ->check(CLI::IsMember({"cosine", "linear-beta"}));
  o.variant = cmd->add_option("--variant", c.variant, "Sampler variant")
                  ->check(CLI::IsMember({"deterministic", "ancestral"}));
  o.seed = cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--threads", c.threads, "Executor threads (0 = OpenMP default)")
      ->check(CLI::NonNegativeNumber);
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Session {
 public:
  Session(CliConfig c, Overrides o, std::ostream& out)
      : c_(std::move(c)), o_(o), out_(out) {}

  int tree() {
    const auto& t = real_tree();
    const EmbeddingTree* shown = &t;
    if (ablating()) shown = &ablation_tree();
    if (!c_.output.empty()) write_file_atomic(c_.output, tree_to_json(*shown));
    if (ablating()) out_ << "ablation: random-encodings\n";
    out_ << "N: " << shown->prompt_count() << "\n"
         << "depth: " << shown->height() << "\n"
         << "c_max: " << format_fixed(shown->c_max(), 6) << "\n"
         << "inversion_count: " << shown->inversion_count() << "\n";
    return kExitOk;
  }

  int plan() {
    const SharePlan& p = share_plan();
    if (!c_.output.empty()) write_file_atomic(c_.output, plan_to_json(p));
    out_ << "N: " << p.prompt_count() << "\n"
         << "K: " << p.params.K << "\n"
         << "tau: " << c_.tau << "\n"
         << "total_evaluations: " << p.total_evaluations << "\n"
         << "baseline_evaluations: " << p.baseline_evaluations << "\n"
         << "savings: " << format_fixed(100.0 * p.savings_fraction, 2) << "%\n";
    return kExitOk;
  }

  int simulate() {
    if (c_.output.empty()) throw UsageError("simulate needs --output for the samples file");
    const NoiseSchedule schedule = make_schedule(config().K, config().variant, config().curve);
    const ToyWorld world = make_world(config(), real_tree().dimension());
    const PromptSet prompts = real_tree().leaf_prompts();
    GenerationOutput outputs;
    RunMetrics metrics;
    ScheduleParams params = schedule_params();
    if (c_.standard) {
      outputs = run_standard(real_tree(), world, schedule, config().master_seed);
      metrics = standard_metrics(outputs, world, prompts);
      params.tau = 0.0;
    } else {
      const EmbeddingTree conditioned = condition_tree(real_tree(), ablating() ? &ablation_tree() : nullptr);
      outputs = execute_plan(share_plan(), conditioned, world, schedule, config().master_seed,
                             {c_.threads, false});
      metrics = compute_metrics(share_plan(), outputs, world, prompts, config().master_seed);
    }
    write_file_atomic(c_.output, samples_to_jsonl(outputs));
    const std::string report = metrics_to_json(metrics, params, prompts.size());
    if (c_.metrics_path.empty()) {
      out_ << report;
    } else {
      write_file_atomic(c_.metrics_path, report);
      out_ << "savings: " << format_fixed(100.0 * metrics.savings_fraction, 2) << "%\n";
    }
    return kExitOk;
  }

  int sweep() {
    if (c_.sweep.empty()) throw UsageError("sweep needs --sweep with at least one tau");
    const NoiseSchedule schedule = make_schedule(config().K, config().variant, config().curve);
    const ToyWorld world = make_world(config(), real_tree().dimension());
    const PromptSet prompts = real_tree().leaf_prompts();
    SweepOptions options;
    options.phi_variant = parse_phi_variant(c_.phi);
    options.executor.threads = c_.threads;
    std::vector<SweepRow> rows;
    for (double tau : c_.sweep) {
      if (!(tau >= 0.0)) throw UsageError("sweep tau values must be >= 0");
      rows.push_back(run_once(real_tree(), prompts, world, schedule, tau, config().master_seed,
                              options, ablating() ? &ablation_tree() : nullptr));
    }
    const std::string csv = sweep_csv(rows);
    if (c_.output.empty()) {
      out_ << csv;
    } else {
      write_file_atomic(c_.output, csv);
    }
    return kExitOk;
  }

 private:
  static bool given(const CLI::Option* opt) { return opt != nullptr && opt->count() > 0; }
  bool ablating() const { return c_.ablation == "random-encodings"; }

  const WorldConfig& config() {
    if (!config_) {
      WorldConfig w;
      if (!c_.world_path.empty()) {
        if (!fs::exists(c_.world_path)) throw UsageError("world config not found: " + c_.world_path);
        w = parse_world_config(read_file(c_.world_path));
      }
      const bool base = c_.world_path.empty();
      if (base || given(o_.k)) w.K = c_.K;
      if (base || given(o_.schedule)) w.curve = parse_curve(c_.schedule);
      if (base || given(o_.variant)) w.variant = parse_variant(c_.variant);
      if (base || given(o_.seed)) w.master_seed = c_.seed;
      config_ = w;
    }
    return *config_;
  }

  ScheduleParams schedule_params() {
    const int K = given(o_.k) || c_.world_path.empty() ? c_.K : config().K;
    ScheduleParams p{K, c_.tau, parse_phi_variant(c_.phi)};
    p.validate();
    return p;
  }

  const PromptSet& prompts() {
    if (!prompts_) {
      if (c_.input.empty()) throw UsageError("--input is required");
      if (!fs::exists(c_.input)) throw UsageError("input not found: " + c_.input);
      prompts_.emplace(load_prompt_set(c_.input, LoadOptions{c_.normalize}));
    }
    return *prompts_;
  }

  std::optional<fs::path> cache_file(const std::string& kind, std::uint64_t key) const {
    if (c_.cache_dir.empty()) return std::nullopt;
    fs::create_directories(c_.cache_dir);
    return fs::path(c_.cache_dir) / (kind + "-" + hex(key) + ".json");
  }

  std::uint64_t input_key(const std::string& salt) {
    if (!input_key_) input_key_ = fnv1a64(read_file(c_.input));
    return fnv1a64(salt + (c_.normalize ? "+norm" : ""), *input_key_);
  }

  EmbeddingTree cached_tree(const std::string& salt, const auto& build) {
    const auto path = cache_file("tree", input_key(salt));
    if (path && fs::exists(*path)) return tree_from_json(read_file(*path));
    EmbeddingTree t = build();
    if (path) write_file_atomic(*path, tree_to_json(t));
    return t;
  }

  const EmbeddingTree& real_tree() {
    if (!tree_) {
      if (!c_.tree_path.empty()) {
        if (!fs::exists(c_.tree_path)) throw UsageError("tree not found: " + c_.tree_path);
        tree_.emplace(tree_from_json(read_file(c_.tree_path)));
      } else {
        if (c_.input.empty()) throw UsageError("--input or --tree is required");
        if (!fs::exists(c_.input)) throw UsageError("input not found: " + c_.input);
        tree_.emplace(cached_tree("real", [this] { return build_tree(prompts()); }));
      }
    }
    return *tree_;
  }

  const EmbeddingTree& ablation_tree() {
    if (!ablation_tree_) {
      if (!c_.tree_path.empty() && c_.input.empty()) {
        ablation_tree_.emplace(
            build_tree(randomize_encodings(real_tree().leaf_prompts(), config().master_seed)));
      } else {
        ablation_tree_.emplace(
            cached_tree("random-encodings:" + std::to_string(config().master_seed), [this] {
              return build_tree(randomize_encodings(prompts(), config().master_seed));
            }));
      }
    }
    return *ablation_tree_;
  }

  const SharePlan& share_plan() {
    if (!plan_) {
      const ScheduleParams params = schedule_params();
      const EmbeddingTree* abl = ablating() ? &ablation_tree() : nullptr;
      std::optional<fs::path> path;
      if (!c_.cache_dir.empty()) {
        const std::string salt = tree_to_json(abl ? *abl : real_tree()) + "|" +
                                 std::to_string(params.K) + "|" + format_fixed(params.tau, 17) +
                                 "|" + c_.phi;
        path = cache_file("plan", fnv1a64(salt));
      }
      if (path && fs::exists(*path)) {
        plan_.emplace(plan_from_json(read_file(*path)));
      } else {
        plan_.emplace(compile_plan(real_tree(), params, abl));
        if (path) write_file_atomic(*path, plan_to_json(*plan_));
      }
    }
    return *plan_;
  }

  RunMetrics standard_metrics(const GenerationOutput& outputs, const ToyWorld& world,
                              const PromptSet& prompts) {
    RunMetrics m;
    m.evaluations_total = outputs.denoiser_calls;
    m.baseline = outputs.denoiser_calls;
    m.steps_per_image = static_cast<double>(config().K);
    m.quality_mse = quality_mse(outputs, world, prompts);
    m.wasserstein2 = residual_wasserstein2(outputs, world, prompts);
    if (outputs.prompts.size() >= 2) {
      m.diversity = diversity_pairwise_cosine(outputs, kDiversitySampleCap, config().master_seed)
                        .mean_cosine;
    }
    return m;
  }

  CliConfig c_;
  Overrides o_;
  std::ostream& out_;
  std::optional<WorldConfig> config_;
  std::optional<PromptSet> prompts_;
  std::optional<std::uint64_t> input_key_;
  std::optional<EmbeddingTree> tree_;
  std::optional<EmbeddingTree> ablation_tree_;
  std::optional<SharePlan> plan_;
};

int generate(const CliConfig& c, std::ostream& out) {
  if (c.output.empty()) throw UsageError("generate needs --output");
  SyntheticSpec spec{c.clusters, c.per_cluster, c.dimension, c.jitter, c.seed};
  const PromptSet prompts = generate_synthetic(spec);
  save_prompt_set(prompts, c.output,
                  c.format == "binary" ? PromptFormat::kBinary : PromptFormat::kJsonl);
  out << "wrote " << prompts.size() << " prompts (d=" << prompts.dimension() << ")\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical shared-step diffusion planner and simulator", "sharediff"};
  app.require_subcommand(1);
  CliConfig c;
  Overrides o;

  auto* gen = app.add_subcommand("generate", "Write a synthetic clustered prompt set");
  gen->add_option("--clusters", c.clusters)->check(CLI::PositiveNumber);
  gen->add_option("--per-cluster", c.per_cluster)->check(CLI::PositiveNumber);
  gen->add_option("--dimension", c.dimension)->check(CLI::PositiveNumber);
  gen->add_option("--jitter", c.jitter)->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", c.seed);
  gen->add_option("--format", c.format)->check(CLI::IsMember({"jsonl", "binary"}));
  gen->add_option("--output", c.output);

  auto* tree = app.add_subcommand("tree", "Build the embedding tree");
  add_input(tree, c);
  tree->add_option("--output", c.output, "Tree JSON output");
  tree->add_option("--seed", c.seed, "Seed for random encodings");

  auto* plan = app.add_subcommand("plan", "Compile a shared-step plan");
  add_input(plan, c);
  add_plan_options(plan, c, o);
  plan->add_option("--output", c.output, "Plan JSON output");
  o.seed = plan->add_option("--seed", c.seed, "Seed for random encodings");

  Overrides sim_o, sweep_o;
  auto* sim = app.add_subcommand("simulate", "Execute a plan against the toy world");
  add_input(sim, c);
  add_plan_options(sim, c, sim_o);
  add_world_options(sim, c, sim_o);
  sim->add_option("--output", c.output, "Samples JSONL output");
  sim->add_option("--metrics", c.metrics_path, "Metrics JSON output (default: stdout)");
  sim->add_flag("--standard", c.standard, "Independent per-prompt diffusion instead of a plan");

  auto* sweep = app.add_subcommand("sweep", "Plan and simulate over several tau values");
  add_input(sweep, c);
  add_plan_options(sweep, c, sweep_o);
  add_world_options(sweep, c, sweep_o);
  sweep->add_option("--sweep", c.sweep, "Comma-separated tau values")->delimiter(',');
  sweep->add_option("--output", c.output, "CSV output (default: stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return generate(c, out);
    if (tree->parsed()) return Session(c, o, out).tree();
    if (plan->parsed()) return Session(c, o, out).plan();
    if (sim->parsed()) return Session(c, sim_o, out).simulate();
    if (sweep->parsed()) return Session(c, sweep_o, out).sweep();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace sharediff::cli
