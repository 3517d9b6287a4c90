#include "sharediff/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sharediff/errors.hpp"

namespace sharediff {
namespace {

// `path` runs leaf to root.
NodeId select_on_path(const EmbeddingTree& tree, const std::vector<NodeId>& path,
                      double threshold) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::size_t best = path.size();
  for (std::size_t i = 0; i < path.size(); ++i) {
    const NodeId parent = tree.node(path[i]).parent;
    const double parent_score = parent == kNoNode ? kInf : tree.node(parent).score;
    if (parent_score < threshold) continue;
    if (best == path.size() || tree.node(path[i]).score < tree.node(path[best]).score) best = i;
  }
  // Equal scores (only possible at 0) resolve to the shallowest eligible node.
  const double best_score = tree.node(path[best]).score;
  std::size_t chosen = best;
  for (std::size_t i = best + 1; i < path.size(); ++i) {
    const TreeNode& node = tree.node(path[i]);
    if (node.score != best_score) break;
    const NodeId parent = node.parent;
    if (parent != kNoNode && tree.node(parent).score < threshold) break;
    chosen = i;
  }
  return path[chosen];
}

}  // namespace

void ScheduleParams::validate() const {
  if (K < 1) throw UsageError("K must be >= 1");
  if (!std::isfinite(tau) || tau < 0.0) throw UsageError("tau must be finite and >= 0");
}

double phi(int k, const ScheduleParams& params) {
  if (k < 1 || k > params.K) {
    throw UsageError("step " + std::to_string(k) + " outside [1, " + std::to_string(params.K) +
                     "]");
  }
  if (params.phi_variant == PhiVariant::kAppendix) {
    if (params.K == 1) return 0.0;
    return params.tau * static_cast<double>(params.K - k) / static_cast<double>(params.K - 1);
  }
  return params.tau * (1.0 - static_cast<double>(k) / static_cast<double>(params.K));
}

NodeId select_node(const EmbeddingTree& tree, std::size_t prompt_index, int k,
                   const ScheduleParams& params) {
  params.validate();
  return select_on_path(tree, path_to_root(tree, prompt_index), phi(k, params));
}

NodeId select_node(const EmbeddingTree& tree, const std::string& prompt_id, int k,
                   const ScheduleParams& params) {
  return select_node(tree, static_cast<std::size_t>(tree.leaf_of(prompt_id)), k, params);
}

EmbeddingTree condition_tree(const EmbeddingTree& tree, const EmbeddingTree* ablation) {
  if (ablation == nullptr) return tree;
  return rebind_embeddings(*ablation, tree);
}

SharePlan compile_plan(const EmbeddingTree& tree, const ScheduleParams& params,
                       const EmbeddingTree* ablation) {
  params.validate();
  if (ablation != nullptr && ablation->prompt_ids() != tree.prompt_ids()) {
    throw UsageError("ablation tree prompt ids do not match the embedding tree");
  }
  const EmbeddingTree selection = condition_tree(tree, ablation);
  const std::size_t n = selection.prompt_count();
  const int K = params.K;
  std::vector<double> thresholds(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) thresholds[k - 1] = phi(k, params);

  SharePlan plan;
  plan.params = params;
  plan.prompt_ids = selection.prompt_ids();
  plan.node_count = selection.size();
  plan.structure_digest = selection.structure_digest();
  plan.assignment.resize(n * static_cast<std::size_t>(K));

  const auto prompts = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
  for (std::int64_t y = 0; y < prompts; ++y) {
    const auto path = path_to_root(selection, static_cast<std::size_t>(y));
    NodeId* row = plan.assignment.data() + y * K;
    for (int k = 0; k < K; ++k) row[k] = select_on_path(selection, path, thresholds[k]);
  }

  std::vector<int> seen_at(selection.size(), 0);
  std::vector<int> active_at(selection.size(), 0);
  plan.steps.reserve(static_cast<std::size_t>(K));
  for (int k = 1; k <= K; ++k) {
    PlanStep step;
    step.k = k;
    for (std::size_t y = 0; y < n; ++y) {
      const NodeId c = plan.at(y, k);
      if (seen_at[c] != k) {
        seen_at[c] = k;
        step.active.push_back(c);
      }
    }
    std::sort(step.active.begin(), step.active.end());
    step.inherit_from.reserve(step.active.size());
    for (NodeId c : step.active) {
      if (k == 1) {
        step.inherit_from.push_back(kFresh);
        continue;
      }
      NodeId source = c;
      while (source != kNoNode && active_at[source] != k - 1) source = selection.node(source).parent;
      if (source == kNoNode) {
        throw std::logic_error("node " + std::to_string(c) + " has no active ancestor at step " +
                               std::to_string(k - 1));
      }
      step.inherit_from.push_back(source);
    }
    for (NodeId c : step.active) {
      active_at[c] = k;
      plan.max_depth_used = std::max(plan.max_depth_used, selection.node(c).depth);
    }
    plan.total_evaluations += static_cast<std::int64_t>(step.active.size());
    plan.steps.push_back(std::move(step));
  }
  plan.baseline_evaluations = static_cast<std::int64_t>(K) * static_cast<std::int64_t>(n);
  plan.savings_fraction = 1.0 - static_cast<double>(plan.total_evaluations) /
                                    static_cast<double>(plan.baseline_evaluations);
  return plan;
}

SavingsReport savings_report(const SharePlan& plan) {
  SavingsReport report;
  report.per_step_active_counts.reserve(plan.steps.size());
  for (const auto& step : plan.steps) {
    report.per_step_active_counts.push_back(static_cast<std::int64_t>(step.active.size()));
  }
  report.total = plan.total_evaluations;
  report.baseline = plan.baseline_evaluations;
  report.savings_fraction = plan.savings_fraction;
  report.max_tree_depth_used = plan.max_depth_used;
  return report;
}

}  // namespace sharediff
