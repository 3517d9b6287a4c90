#include <map>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sharediff/diffusion.hpp"
#include "sharediff/errors.hpp"

namespace sharediff {
namespace {

void check_consistent(const SharePlan& plan, const EmbeddingTree& tree, const ToyWorld& world,
                      const NoiseSchedule& schedule) {
  if (plan.node_count != tree.size() || plan.structure_digest != tree.structure_digest()) {
    throw UsageError("plan was compiled against a different tree");
  }
  if (plan.prompt_ids != tree.prompt_ids()) throw UsageError("plan and tree prompt ids differ");
  if (plan.params.K != schedule.K || static_cast<int>(plan.steps.size()) != schedule.K) {
    throw UsageError("plan has K=" + std::to_string(plan.params.K) + " but schedule has K=" +
                     std::to_string(schedule.K));
  }
  if (world.embedding_dimension() != tree.dimension()) {
    throw UsageError("world expects embeddings of dimension " +
                     std::to_string(world.embedding_dimension()) + ", tree has " +
                     std::to_string(tree.dimension()));
  }
}

std::vector<std::vector<double>> node_means(const SharePlan& plan, const EmbeddingTree& tree,
                                            const ToyWorld& world) {
  std::vector<char> used(tree.size(), 0);
  for (const auto& step : plan.steps) {
    for (NodeId c : step.active) used[c] = 1;
  }
  std::vector<std::vector<double>> mu(tree.size());
  const auto n = static_cast<std::int64_t>(tree.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < n; ++c) {
    if (used[c]) mu[c] = world.target_mean(tree.node(static_cast<NodeId>(c)).embedding);
  }
  return mu;
}

std::vector<PromptOutput> traced_outputs(const SharePlan& plan) {
  std::vector<PromptOutput> out(plan.prompt_count());
  for (std::size_t y = 0; y < out.size(); ++y) {
    out[y].id = plan.prompt_ids[y];
    out[y].trace.reserve(static_cast<std::size_t>(plan.params.K));
    for (int k = 1; k <= plan.params.K; ++k) out[y].trace.push_back({plan.at(y, k), k});
  }
  return out;
}

}  // namespace

std::vector<double> initial_noise(std::uint64_t master_seed, NodeId node, std::size_t m) {
  auto stream = make_stream(master_seed, StreamTag::kInitialNoise,
                            {static_cast<std::uint64_t>(node)});
  std::vector<double> x(m);
  for (double& v : x) v = stream.normal();
  return x;
}

RandomStream step_noise_stream(std::uint64_t master_seed, NodeId node, int step) {
  return make_stream(master_seed, StreamTag::kStepNoise,
                     {static_cast<std::uint64_t>(node), static_cast<std::uint64_t>(step)});
}

GenerationOutput execute_plan(const SharePlan& plan, const EmbeddingTree& tree,
                              const ToyWorld& world, const NoiseSchedule& schedule,
                              std::uint64_t master_seed, const ExecutorOptions& options) {
  check_consistent(plan, tree, world, schedule);
  const std::size_t m = world.data_dimension();
  const double s = world.target_std();
  const int K = plan.params.K;
  const auto mu = node_means(plan, tree, world);

  // slot_step[c] == k means node c's state after step k sits at states[slot[c]].
  std::vector<int> slot_step(tree.size(), 0);
  std::vector<std::int64_t> slot(tree.size(), -1);
  std::vector<std::vector<double>> prev;
  std::vector<std::int64_t> source_slot;
  GenerationOutput result;
  result.seed = master_seed;

#ifdef _OPENMP
  const int threads = options.threads > 0 ? options.threads : omp_get_max_threads();
#endif

  for (const PlanStep& step : plan.steps) {
    const int k = step.k;
    const auto count = static_cast<std::int64_t>(step.active.size());
    source_slot.assign(step.active.size(), -1);
    for (std::size_t i = 0; i < step.active.size(); ++i) {
      const NodeId src = step.inherit_from[i];
      if (src == kFresh) {
        if (k != 1) throw UsageError("fresh state requested after step 1");
        continue;
      }
      if (src < 0 || static_cast<std::size_t>(src) >= tree.size() || slot_step[src] != k - 1) {
        throw UsageError("step " + std::to_string(k) + ": inherit source " +
                         std::to_string(src) + " was not active at the previous step");
      }
      source_slot[i] = slot[src];
    }

    std::vector<std::vector<double>> cur(step.active.size(), std::vector<double>(m));
    const int t = diffusion_time(k, K);
    std::int64_t calls = 0;
#pragma omp parallel for num_threads(threads) schedule(dynamic) reduction(+ : calls)
    for (std::int64_t i = 0; i < count; ++i) {
      const NodeId c = step.active[i];
      const std::vector<double> fresh =
          source_slot[i] < 0 ? initial_noise(master_seed, c, m) : std::vector<double>{};
      const std::vector<double>& input = source_slot[i] < 0 ? fresh : prev[source_slot[i]];
      RandomStream noise = step_noise_stream(master_seed, c, k);
      denoise_step(input, t, mu[c], s, schedule, &noise, cur[i]);
      ++calls;
    }
    result.denoiser_calls += calls;
    if (options.record_evaluations) {
      for (NodeId c : step.active) result.evaluations.push_back({c, k});
    }
    for (std::size_t i = 0; i < step.active.size(); ++i) {
      slot_step[step.active[i]] = k;
      slot[step.active[i]] = static_cast<std::int64_t>(i);
    }
    prev = std::move(cur);
  }

  result.prompts = traced_outputs(plan);
  for (std::size_t y = 0; y < result.prompts.size(); ++y) {
    result.prompts[y].sample = prev[slot[plan.at(y, K)]];
  }
  return result;
}

GenerationOutput execute_plan_serial(const SharePlan& plan, const EmbeddingTree& tree,
                                     const ToyWorld& world, const NoiseSchedule& schedule,
                                     std::uint64_t master_seed) {
  check_consistent(plan, tree, world, schedule);
  const std::size_t m = world.data_dimension();
  const int K = plan.params.K;
  std::map<std::pair<NodeId, int>, std::vector<double>> memo;
  std::map<NodeId, std::vector<double>> means;
  GenerationOutput result;
  result.seed = master_seed;

  for (int k = 1; k <= K; ++k) {
    for (std::size_t y = 0; y < plan.prompt_count(); ++y) {
      const NodeId c = plan.at(y, k);
      if (memo.contains({c, k})) continue;
      std::vector<double> input;
      if (k == 1) {
        input = initial_noise(master_seed, c, m);
      } else {
        NodeId a = c;
        while (a != kNoNode && !memo.contains({a, k - 1})) a = tree.node(a).parent;
        if (a == kNoNode) throw UsageError("no ancestor state for node " + std::to_string(c));
        input = memo.at({a, k - 1});
      }
      auto [it, inserted] = means.try_emplace(c);
      if (inserted) it->second = world.target_mean(tree.node(c).embedding);
      std::vector<double> out(m);
      RandomStream noise = step_noise_stream(master_seed, c, k);
      denoise_step(input, diffusion_time(k, K), it->second, world.target_std(), schedule, &noise,
                   out);
      memo.emplace(std::pair{c, k}, std::move(out));
      ++result.denoiser_calls;
      result.evaluations.push_back({c, k});
    }
    std::erase_if(memo, [k](const auto& entry) { return entry.first.second < k - 1; });
  }

  result.prompts = traced_outputs(plan);
  for (std::size_t y = 0; y < result.prompts.size(); ++y) {
    result.prompts[y].sample = memo.at({plan.at(y, K), K});
  }
  return result;
}

GenerationOutput run_standard(const EmbeddingTree& tree, const ToyWorld& world,
                              const NoiseSchedule& schedule, std::uint64_t master_seed,
                              int steps) {
  if (steps < 0) steps = schedule.K;
  if (steps > schedule.K) throw UsageError("standard run cannot exceed the schedule's K steps");
  if (world.embedding_dimension() != tree.dimension()) {
    throw UsageError("world/embedding dimension mismatch");
  }
  const std::size_t m = world.data_dimension();
  const std::size_t n = tree.prompt_count();
  GenerationOutput result;
  result.seed = master_seed;
  result.prompts.resize(n);
  const auto prompts = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t y = 0; y < prompts; ++y) {
    const NodeId leaf = tree.leaf_of(static_cast<std::size_t>(y));
    const auto mu = world.target_mean(tree.node(leaf).embedding);
    std::vector<double> x = initial_noise(master_seed, leaf, m);
    std::vector<double> next(m);
    PromptOutput& out = result.prompts[y];
    out.id = tree.prompt_ids()[y];
    for (int k = 1; k <= steps; ++k) {
      RandomStream noise = step_noise_stream(master_seed, leaf, k);
      denoise_step(x, diffusion_time(k, schedule.K), mu, world.target_std(), schedule, &noise,
                   next);
      std::swap(x, next);
      out.trace.push_back({leaf, k});
    }
    out.sample = std::move(x);
  }
  result.denoiser_calls = static_cast<std::int64_t>(n) * steps;
  return result;
}

}  // namespace sharediff
