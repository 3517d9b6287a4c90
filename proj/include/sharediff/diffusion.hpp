#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sharediff/embedding.hpp"
#include "sharediff/hierarchy.hpp"
#include "sharediff/planner.hpp"
#include "sharediff/rng.hpp"

namespace sharediff {

enum class SamplerVariant { kDeterministic, kAncestral };
enum class ScheduleCurve { kCosine, kLinearBeta };

/// Discrete noise schedule over diffusion time t = 0 (clean) .. K (noise).
/// Arrays are indexed by t; entry 0 of the per-step coefficients is unused.
struct NoiseSchedule {
  int K = 0;
  SamplerVariant variant = SamplerVariant::kDeterministic;
  ScheduleCurve curve = ScheduleCurve::kCosine;
  std::vector<double> alpha_bar;  // K+1 entries, alpha_bar[0] = 1, strictly decreasing
  std::vector<double> beta;       // beta[t] = 1 - alpha_bar[t] / alpha_bar[t-1]
  std::vector<double> a;          // 1 / sqrt(1 - beta)
  std::vector<double> b;          // beta / (sqrt(1 - beta) sqrt(1 - alpha_bar))
  std::vector<double> sigma;      // ancestral posterior std; all zero if deterministic
};

/// Cosine curve: alpha_bar(u) = f(u)/f(0), f(u) = cos^2(((u + 0.008)/1.008) pi/2),
/// u = t/K, with per-step beta capped at 0.999. Linear-beta: beta linearly
/// spaced over [1e-4, 0.02] * (1000/K), capped at 0.999.
NoiseSchedule make_schedule(int K, SamplerVariant variant, ScheduleCurve curve);

/// sqrt(ab) x0 + sqrt(1 - ab) eps.
std::vector<double> noise_forward(std::span<const double> x0, double alpha_bar,
                                  std::span<const double> epsilon);

/// Conditional Gaussian world: x0 | y ~ N(A y, s^2 I).
class ToyWorld {
 public:
  /// A = I (requires data_dimension == embedding_dimension).
  static ToyWorld identity(std::size_t dimension, double target_std);
  /// A has i.i.d. Gaussian rows normalized to unit length, drawn from the
  /// counter-based stream keyed by `map_seed`.
  static ToyWorld seeded(std::size_t data_dimension, std::size_t embedding_dimension,
                         double target_std, std::uint64_t map_seed);

  std::size_t data_dimension() const { return m_; }
  std::size_t embedding_dimension() const { return d_; }
  double target_std() const { return s_; }
  bool is_identity() const { return identity_; }
  std::uint64_t map_seed() const { return map_seed_; }
  std::span<const double> condition_map() const { return map_; }  // m x d, row-major

  /// A y. Throws UsageError on dimension mismatch.
  std::vector<double> target_mean(std::span<const double> condition) const;
  std::vector<double> target_mean(const Embedding& condition) const {
    return target_mean(condition.values());
  }

 private:
  ToyWorld(std::size_t m, std::size_t d, double s, bool identity, std::uint64_t seed);

  std::size_t m_;
  std::size_t d_;
  double s_;
  bool identity_;
  std::uint64_t map_seed_;
  std::vector<double> map_;
};

/// E[x0 | x_t] for x0 ~ N(mu, s^2 I).
void posterior_x0(std::span<const double> x, double alpha_bar, std::span<const double> mu,
                  double target_std, std::span<double> out);

/// Optimal epsilon prediction E[eps | x_t] for the Gaussian world. Throws
/// UsageError unless 0 < alpha_bar < 1.
std::vector<double> analytic_epsilon(const ToyWorld& world, std::span<const double> x,
                                     double alpha_bar, const Embedding& condition);

/// One reverse step from diffusion time t to t-1 with target mean `mu`
/// (precomputed A y). Ancestral draws its noise from `noise`, which may be null
/// when the schedule is deterministic or sigma_t = 0.
void denoise_step(std::span<const double> x, int t, std::span<const double> mu,
                  double target_std, const NoiseSchedule& schedule, RandomStream* noise,
                  std::span<double> out);
/// Convenience overload computing mu from the condition embedding.
std::vector<double> denoise_step(std::span<const double> x, int t, const Embedding& condition,
                                 const NoiseSchedule& schedule, const ToyWorld& world,
                                 RandomStream* noise);

/// Plan step s = 1..K runs diffusion time t = K - s + 1.
inline int diffusion_time(int step, int K) { return K - step + 1; }

/// Initial noise x_T for a chain rooted at `node`.
std::vector<double> initial_noise(std::uint64_t master_seed, NodeId node, std::size_t m);
/// Per-(node, step) stream for ancestral noise.
RandomStream step_noise_stream(std::uint64_t master_seed, NodeId node, int step);

struct StepEvaluation {
  NodeId node = kNoNode;
  int k = 0;
  friend bool operator==(const StepEvaluation&, const StepEvaluation&) = default;
};

struct PromptOutput {
  std::string id;
  std::vector<double> sample;
  std::vector<StepEvaluation> trace;  // K entries, one per step
};

struct GenerationOutput {
  std::uint64_t seed = 0;
  std::vector<PromptOutput> prompts;  // in prompt order
  std::int64_t denoiser_calls = 0;    // instrumented count
  std::vector<StepEvaluation> evaluations;  // filled when recording is enabled
};

struct ExecutorOptions {
  int threads = 0;  // 0 = OpenMP default
  bool record_evaluations = false;
};

/// Runs a compiled plan. Within a step, active nodes are evaluated in
/// parallel; each (node, step) is evaluated exactly once and branching
/// children copy the state of their inherited ancestor. Only the previous
/// step's states are held, so memory is bounded by the active frontier.
/// Throws UsageError if plan, tree, world and schedule disagree.
GenerationOutput execute_plan(const SharePlan& plan, const EmbeddingTree& tree,
                              const ToyWorld& world, const NoiseSchedule& schedule,
                              std::uint64_t master_seed, const ExecutorOptions& options = {});

/// Serial reference: walks prompts step by step with a (node, step) memo
/// table, recomputing inheritance from the memo instead of the plan's
/// inherit edges.
GenerationOutput execute_plan_serial(const SharePlan& plan, const EmbeddingTree& tree,
                                     const ToyWorld& world, const NoiseSchedule& schedule,
                                     std::uint64_t master_seed);

/// Standard diffusion: one independent chain per prompt, conditioned on the
/// leaf embedding, streams keyed by the leaf node. `steps` < K truncates the
/// chain after that many steps of the K-step schedule and returns the
/// partially denoised state.
GenerationOutput run_standard(const EmbeddingTree& tree, const ToyWorld& world,
                              const NoiseSchedule& schedule, std::uint64_t master_seed,
                              int steps = -1);

}  // namespace sharediff
