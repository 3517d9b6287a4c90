#include "sharediff/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "sharediff/errors.hpp"
#include "sharediff/io_util.hpp"

namespace sharediff {
namespace {

// Residual x - A y per prompt, in prompt order.
std::vector<std::vector<double>> residuals(const GenerationOutput& outputs,
                                           const ToyWorld& world, const PromptSet& prompts) {
  std::vector<const PromptOutput*> by_prompt(prompts.size(), nullptr);
  for (const auto& out : outputs.prompts) {
    const auto idx = prompts.find(out.id);
    if (!idx) throw UsageError("output for unknown prompt '" + out.id + "'");
    by_prompt[*idx] = &out;
  }
  std::vector<std::vector<double>> r(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (by_prompt[i] == nullptr) throw UsageError("no output for prompt '" + prompts[i].id + "'");
    const auto mu = world.target_mean(prompts[i].embedding);
    const auto& x = by_prompt[i]->sample;
    if (x.size() != mu.size()) throw UsageError("sample dimension mismatch");
    r[i].resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) r[i][j] = x[j] - mu[j];
  }
  return r;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

double quality_mse(const GenerationOutput& outputs, const ToyWorld& world,
                   const PromptSet& prompts) {
  const auto r = residuals(outputs, world, prompts);
  double total = 0.0;
  for (const auto& ri : r) total += dot(ri, ri);
  return total / static_cast<double>(r.size());
}

double residual_wasserstein2(const GenerationOutput& outputs, const ToyWorld& world,
                             const PromptSet& prompts) {
  const auto r = residuals(outputs, world, prompts);
  const std::size_t m = world.data_dimension();
  const auto n = static_cast<double>(r.size());
  double w2 = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double mean = 0.0;
    for (const auto& ri : r) mean += ri[j];
    mean /= n;
    double var = 0.0;
    for (const auto& ri : r) var += (ri[j] - mean) * (ri[j] - mean);
    var /= n;
    const double dev = std::sqrt(var) - world.target_std();
    w2 += mean * mean + dev * dev;
  }
  return std::sqrt(w2);
}

DiversityResult diversity_pairwise_cosine(const GenerationOutput& outputs,
                                          std::size_t sample_cap, std::uint64_t seed) {
  DiversityResult result;
  std::vector<const std::vector<double>*> usable;
  for (const auto& out : outputs.prompts) {
    if (dot(out.sample, out.sample) > 0.0) {
      usable.push_back(&out.sample);
    } else {
      ++result.excluded_zero;
    }
  }
  if (usable.size() < 2 || sample_cap < 2) {
    throw UsageError("diversity needs at least two non-zero samples");
  }
  const std::size_t take = std::min(sample_cap, usable.size());
  auto stream = make_stream(seed, StreamTag::kSubsample);
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + static_cast<std::size_t>(stream.below(usable.size() - i));
    std::swap(usable[i], usable[j]);
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < take; ++i) {
    for (std::size_t j = i + 1; j < take; ++j) {
      total += cosine_similarity(*usable[i], *usable[j]);
      ++pairs;
    }
  }
  result.mean_cosine = total / static_cast<double>(pairs);
  result.samples_used = take;
  return result;
}

RunMetrics compute_metrics(const SharePlan& plan, const GenerationOutput& outputs,
                           const ToyWorld& world, const PromptSet& prompts,
                           std::uint64_t diversity_seed) {
  RunMetrics m;
  m.savings_fraction = plan.savings_fraction;
  m.evaluations_total = plan.total_evaluations;
  m.baseline = plan.baseline_evaluations;
  m.steps_per_image = static_cast<double>(plan.total_evaluations) /
                      static_cast<double>(plan.prompt_count());
  m.quality_mse = quality_mse(outputs, world, prompts);
  m.wasserstein2 = residual_wasserstein2(outputs, world, prompts);
  std::size_t nonzero = 0;
  for (const auto& out : outputs.prompts) nonzero += dot(out.sample, out.sample) > 0.0;
  if (nonzero >= 2) {
    m.diversity = diversity_pairwise_cosine(outputs, kDiversitySampleCap, diversity_seed).mean_cosine;
  }
  return m;
}

SweepRow run_once(const EmbeddingTree& tree, const PromptSet& prompts, const ToyWorld& world,
                  const NoiseSchedule& schedule, double tau, std::uint64_t master_seed,
                  const SweepOptions& options, const EmbeddingTree* ablation) {
  const ScheduleParams params{schedule.K, tau, options.phi_variant};
  const SharePlan plan = compile_plan(tree, params, ablation);
  const EmbeddingTree conditioned = condition_tree(tree, ablation);
  const auto outputs = execute_plan(plan, conditioned, world, schedule, master_seed,
                                    options.executor);
  return {tau, schedule.K, prompts.size(),
          compute_metrics(plan, outputs, world, prompts, master_seed)};
}

std::vector<SweepRow> sweep_tau(const PromptSet& prompts, const ToyWorld& world,
                                const NoiseSchedule& schedule,
                                const std::vector<double>& tau_values,
                                std::uint64_t master_seed, const SweepOptions& options) {
  if (tau_values.empty()) throw UsageError("sweep needs at least one tau value");
  const EmbeddingTree tree = build_tree(prompts);
  std::optional<EmbeddingTree> ablation;
  if (options.random_encodings) {
    ablation = build_tree(randomize_encodings(prompts, options.ablation_seed));
  }
  std::vector<SweepRow> rows;
  rows.reserve(tau_values.size());
  for (double tau : tau_values) {
    rows.push_back(run_once(tree, prompts, world, schedule, tau, master_seed, options,
                            ablation ? &*ablation : nullptr));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "tau,K,N,evaluations,baseline,savings,quality,diversity\n";
  for (const auto& row : rows) {
    out += format_number(row.tau) + "," + std::to_string(row.K) + "," + std::to_string(row.N) +
           "," + std::to_string(row.metrics.evaluations_total) + "," +
           std::to_string(row.metrics.baseline) + "," +
           format_fixed(row.metrics.savings_fraction, 6) + "," +
           format_number(row.metrics.quality_mse) + "," +
           (row.metrics.diversity ? format_number(*row.metrics.diversity) : std::string("NA")) +
           "\n";
  }
  return out;
}

}  // namespace sharediff
