// Parallel production kernels against their serial references.

#include <benchmark/benchmark.h>

#include "sharediff/diffusion.hpp"
#include "sharediff/planner.hpp"

using namespace sharediff;

namespace {

struct Workload {
  PromptSet prompts;
  EmbeddingTree tree;
  SharePlan plan;
  ToyWorld world;
  NoiseSchedule schedule;
};

Workload make_workload(std::size_t clusters, std::size_t per_cluster, double tau) {
  auto prompts = generate_synthetic({clusters, per_cluster, 64, 0.05, 1});
  auto tree = build_tree(prompts);
  auto plan = compile_plan(tree, {40, tau});
  return {std::move(prompts), tree, std::move(plan), ToyWorld::identity(64, 0.1),
          make_schedule(40, SamplerVariant::kAncestral, ScheduleCurve::kCosine)};
}

void BM_ExecutePlanParallel(benchmark::State& state) {
  const auto w = make_workload(static_cast<std::size_t>(state.range(0)), 16, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(execute_plan(w.plan, w.tree, w.world, w.schedule, 3));
  }
  state.counters["evaluations"] = static_cast<double>(w.plan.total_evaluations);
}

void BM_ExecutePlanSerial(benchmark::State& state) {
  const auto w = make_workload(static_cast<std::size_t>(state.range(0)), 16, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(execute_plan_serial(w.plan, w.tree, w.world, w.schedule, 3));
  }
  state.counters["evaluations"] = static_cast<double>(w.plan.total_evaluations);
}

void BM_BuildTree(benchmark::State& state) {
  const auto prompts = generate_synthetic({static_cast<std::size_t>(state.range(0)), 4, 64, 0.1, 2});
  for (auto _ : state) benchmark::DoNotOptimize(build_tree(prompts));
}

void BM_ReferenceBuildTree(benchmark::State& state) {
  const auto prompts = generate_synthetic({static_cast<std::size_t>(state.range(0)), 4, 64, 0.1, 2});
  for (auto _ : state) benchmark::DoNotOptimize(reference_build_tree(prompts));
}

}  // namespace

BENCHMARK(BM_ExecutePlanParallel)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExecutePlanSerial)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
// The reference clusterer is capped at 64 prompts (16 clusters of 4).
BENCHMARK(BM_BuildTree)->Arg(4)->Arg(16)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReferenceBuildTree)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
