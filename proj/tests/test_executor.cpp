#include <doctest.h>

#include <map>
#include <set>

#include "helpers.hpp"
#include "sharediff/diffusion.hpp"
#include "sharediff/errors.hpp"
#include "sharediff/planner.hpp"

using namespace sharediff;
using sharediff::testing::duplicated_prompts;
using sharediff::testing::random_prompts;

namespace {

NoiseSchedule det(int K) {
  return make_schedule(K, SamplerVariant::kDeterministic, ScheduleCurve::kCosine);
}

// Chain for one prompt, written out step by step from the public kernels.
std::vector<double> manual_chain(const EmbeddingTree& tree, std::size_t y, const ToyWorld& world,
                                 const NoiseSchedule& sched, std::uint64_t seed) {
  const NodeId leaf = tree.leaf_of(y);
  auto x = initial_noise(seed, leaf, world.data_dimension());
  for (int k = 1; k <= sched.K; ++k) {
    auto noise = step_noise_stream(seed, leaf, k);
    x = denoise_step(x, diffusion_time(k, sched.K), tree.node(leaf).embedding, sched, world, &noise);
  }
  return x;
}

}  // namespace

TEST_CASE("tau zero is independent per-prompt diffusion") {
  const auto prompts = random_prompts(12, 6, 2);
  const auto tree = build_tree(prompts);
  const auto world = ToyWorld::identity(6, 0.2);
  for (auto variant : {SamplerVariant::kDeterministic, SamplerVariant::kAncestral}) {
    const auto sched = make_schedule(16, variant, ScheduleCurve::kCosine);
    const auto plan = compile_plan(tree, {16, 0.0});
    const auto out = execute_plan(plan, tree, world, sched, 5);
    const auto standard = run_standard(tree, world, sched, 5);
    REQUIRE(out.prompts.size() == 12);
    for (std::size_t y = 0; y < 12; ++y) {
      CHECK(out.prompts[y].sample == standard.prompts[y].sample);
      CHECK(out.prompts[y].sample == manual_chain(tree, y, world, sched, 5));
      CHECK(out.prompts[y].trace == standard.prompts[y].trace);
    }
    CHECK(out.denoiser_calls == 16 * 12);
  }
}

TEST_CASE("duplicated prompts return one shared sample") {
  const auto tree = build_tree(duplicated_prompts(5, {1, 2, 3}));
  const auto world = ToyWorld::identity(3, 0.1);
  const auto plan = compile_plan(tree, {12, 1.0});
  const auto out = execute_plan(plan, tree, world, det(12), 1, {0, true});
  CHECK(out.denoiser_calls == 12);
  for (const auto& p : out.prompts) {
    CHECK(p.sample == out.prompts[0].sample);
    for (const auto& e : p.trace) CHECK(e.node == tree.root());
  }
}

TEST_CASE("siblings share trace prefixes and diverge after") {
  const auto prompts = generate_synthetic({2, 4, 8, 0.1, 3});
  const auto tree = build_tree(prompts);
  const auto world = ToyWorld::identity(8, 0.1);
  const auto plan = compile_plan(tree, {20, 1.0});
  const auto sched = det(20);
  const auto out = execute_plan(plan, tree, world, sched, 9);

  // Replay each prompt's own trace to recover its intermediate states.
  auto states_of = [&](std::size_t y) {
    std::vector<std::vector<double>> states;
    std::vector<double> x = initial_noise(9, plan.at(y, 1), 8);
    for (int k = 1; k <= 20; ++k) {
      const NodeId c = plan.at(y, k);
      x = denoise_step(x, diffusion_time(k, 20), tree.node(c).embedding, sched, world, nullptr);
      states.push_back(x);
    }
    return states;
  };
  std::vector<std::vector<std::vector<double>>> states;
  for (std::size_t y = 0; y < prompts.size(); ++y) {
    states.push_back(states_of(y));
    CHECK(states.back().back() == out.prompts[y].sample);
  }
  for (std::size_t a = 0; a < prompts.size(); ++a) {
    for (std::size_t b = a + 1; b < prompts.size(); ++b) {
      int shared = 0;
      while (shared < 20 && plan.at(a, shared + 1) == plan.at(b, shared + 1)) ++shared;
      for (int k = 1; k <= 20; ++k) {
        if (k <= shared) {
          CHECK(out.prompts[a].trace[k - 1] == out.prompts[b].trace[k - 1]);
          CHECK(states[a][k - 1] == states[b][k - 1]);
        } else {
          CHECK_FALSE(states[a][k - 1] == states[b][k - 1]);
        }
      }
    }
  }
}

TEST_CASE("every (node, step) is evaluated exactly once") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto prompts = generate_synthetic({4, 5, 6, 0.15, seed});
    const auto tree = build_tree(prompts);
    const auto world = ToyWorld::identity(6, 0.1);
    const auto plan = compile_plan(tree, {25, 0.2 * static_cast<double>(seed % 8)});
    const auto out = execute_plan(plan, tree, world, det(25), seed, {0, true});
    CHECK(out.denoiser_calls == plan.total_evaluations);
    std::set<std::pair<NodeId, int>> seen;
    for (const auto& e : out.evaluations) CHECK(seen.insert({e.node, e.k}).second);
    CHECK(static_cast<std::int64_t>(seen.size()) == plan.total_evaluations);

    const auto serial = execute_plan_serial(plan, tree, world, det(25), seed);
    CHECK(serial.denoiser_calls == plan.total_evaluations);
    std::set<std::pair<NodeId, int>> serial_seen;
    for (const auto& e : serial.evaluations) CHECK(serial_seen.insert({e.node, e.k}).second);
    CHECK(serial_seen == seen);
  }
}

TEST_CASE("parallel executor matches the serial reference") {
  const auto prompts = generate_synthetic({6, 6, 10, 0.1, 12});
  const auto tree = build_tree(prompts);
  const auto world = ToyWorld::seeded(4, 10, 0.3, 2);
  for (auto variant : {SamplerVariant::kDeterministic, SamplerVariant::kAncestral}) {
    const auto sched = make_schedule(30, variant, ScheduleCurve::kLinearBeta);
    const auto plan = compile_plan(tree, {30, 0.8});
    const auto serial = execute_plan_serial(plan, tree, world, sched, 4);
    for (int threads : {1, 2, 8}) {
      const auto par = execute_plan(plan, tree, world, sched, 4, {threads, false});
      for (std::size_t y = 0; y < prompts.size(); ++y) {
        CHECK(par.prompts[y].sample == serial.prompts[y].sample);
        CHECK(par.prompts[y].trace == serial.prompts[y].trace);
      }
    }
  }
}

TEST_CASE("executor rejects mismatched inputs") {
  const auto tree = build_tree(random_prompts(4, 3, 1));
  const auto other = build_tree(random_prompts(4, 3, 2));
  const auto plan = compile_plan(tree, {10, 1.0});
  const auto world = ToyWorld::identity(3, 0.1);
  CHECK_THROWS_AS(execute_plan(plan, tree, world, det(11), 0), UsageError);
  CHECK_THROWS_AS(execute_plan(plan, tree, ToyWorld::identity(4, 0.1), det(10), 0), UsageError);
  if (other.structure_digest() != tree.structure_digest()) {
    CHECK_THROWS_AS(execute_plan(plan, other, world, det(10), 0), UsageError);
  }
  auto broken = plan;
  broken.steps[3].inherit_from[0] = 999;
  CHECK_THROWS_AS(execute_plan(broken, tree, world, det(10), 0), UsageError);
}

TEST_CASE("truncated standard runs stop early") {
  const auto tree = build_tree(random_prompts(3, 4, 6));
  const auto world = ToyWorld::identity(4, 0.1);
  const auto sched = det(20);
  const auto partial = run_standard(tree, world, sched, 1, 5);
  CHECK(partial.denoiser_calls == 15);
  CHECK(partial.prompts[0].trace.size() == 5);
  const auto zero = run_standard(tree, world, sched, 1, 0);
  CHECK(zero.prompts[1].sample == initial_noise(1, 1, 4));
  CHECK_THROWS_AS(run_standard(tree, world, sched, 1, 21), UsageError);
}
