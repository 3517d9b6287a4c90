#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sharediff/diffusion.hpp"
#include "sharediff/planner.hpp"

namespace sharediff {

struct RunMetrics {
  double savings_fraction = 0.0;
  double quality_mse = 0.0;
  double wasserstein2 = 0.0;
  std::optional<double> diversity;  // absent with fewer than two usable samples
  std::int64_t evaluations_total = 0;
  std::int64_t baseline = 0;
  double steps_per_image = 0.0;
  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

/// Mean over prompts of |x - A y|^2. Throws UsageError if a prompt has no
/// output or an output names an unknown prompt.
double quality_mse(const GenerationOutput& outputs, const ToyWorld& world,
                   const PromptSet& prompts);

/// 2-Wasserstein distance between the diagonal Gaussian fitted to the pooled
/// residuals x - A y and the target N(0, s^2 I).
double residual_wasserstein2(const GenerationOutput& outputs, const ToyWorld& world,
                             const PromptSet& prompts);

struct DiversityResult {
  double mean_cosine = 0.0;
  std::size_t samples_used = 0;
  std::size_t excluded_zero = 0;
};

inline constexpr std::size_t kDiversitySampleCap = 100;

/// Mean cosine similarity over all unordered pairs of up to `sample_cap`
/// outputs chosen by a seeded partial shuffle. Zero samples are excluded and
/// counted. Throws UsageError if fewer than two usable samples remain.
DiversityResult diversity_pairwise_cosine(const GenerationOutput& outputs,
                                          std::size_t sample_cap = kDiversitySampleCap,
                                          std::uint64_t seed = 0);

RunMetrics compute_metrics(const SharePlan& plan, const GenerationOutput& outputs,
                           const ToyWorld& world, const PromptSet& prompts,
                           std::uint64_t diversity_seed = 0);

struct SweepOptions {
  PhiVariant phi_variant = PhiVariant::kMain;
  bool random_encodings = false;  // ablation: select on a tree of random vectors
  std::uint64_t ablation_seed = 0;
  ExecutorOptions executor;
};

struct SweepRow {
  double tau = 0.0;
  int K = 0;
  std::size_t N = 0;
  RunMetrics metrics;
};

/// One plan + execution per tau over a single tree, all with `master_seed`.
SweepRow run_once(const EmbeddingTree& tree, const PromptSet& prompts, const ToyWorld& world,
                  const NoiseSchedule& schedule, double tau, std::uint64_t master_seed,
                  const SweepOptions& options, const EmbeddingTree* ablation = nullptr);
std::vector<SweepRow> sweep_tau(const PromptSet& prompts, const ToyWorld& world,
                                const NoiseSchedule& schedule,
                                const std::vector<double>& tau_values,
                                std::uint64_t master_seed, const SweepOptions& options = {});

/// Header `tau,K,N,evaluations,baseline,savings,quality,diversity` plus one
/// row per entry. Absent diversity prints as NA.
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace sharediff
