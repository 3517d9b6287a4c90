#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sharediff/hierarchy.hpp"

namespace sharediff {

/// How the specialization threshold falls across steps 1..K.
enum class PhiVariant {
  kMain,      // tau * (1 - k/K); reaches 0 at k = K
  kAppendix,  // tau * (K - k)/(K - 1); evenly spaced over [tau, 0]
};

struct ScheduleParams {
  int K = 40;
  double tau = 1.0;
  PhiVariant phi_variant = PhiVariant::kMain;

  /// Throws UsageError unless K >= 1 and tau is finite and >= 0.
  void validate() const;
  friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

/// Heterogeneity threshold at step k (1-based). Throws UsageError if k is
/// outside [1, K].
double phi(int k, const ScheduleParams& params);

/// The node whose mean embedding conditions prompt `prompt_index` at step k:
/// among the nodes c on the prompt's root path with score(parent(c)) >= phi(k)
/// (the root's parent counts as +inf), the one with the lowest score. Equal
/// scores can only occur at 0 along the bottom of the path; such ties resolve
/// to the shallowest tied node.
NodeId select_node(const EmbeddingTree& tree, std::size_t prompt_index, int k,
                   const ScheduleParams& params);
NodeId select_node(const EmbeddingTree& tree, const std::string& prompt_id, int k,
                   const ScheduleParams& params);

inline constexpr NodeId kFresh = -1;

struct PlanStep {
  int k = 0;
  std::vector<NodeId> active;        // ascending node ids
  std::vector<NodeId> inherit_from;  // parallel to `active`; kFresh at k = 1
  friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

/// Compiled shared-step execution plan. Each (node, step) pair listed in
/// `steps` is one denoiser evaluation.
struct SharePlan {
  ScheduleParams params;
  std::vector<std::string> prompt_ids;
  std::vector<NodeId> assignment;  // prompt-major, K entries per prompt
  std::vector<PlanStep> steps;     // steps[k-1]
  std::int64_t total_evaluations = 0;
  std::int64_t baseline_evaluations = 0;
  double savings_fraction = 0.0;
  int max_depth_used = 0;
  std::size_t node_count = 0;
  std::uint64_t structure_digest = 0;

  std::size_t prompt_count() const { return prompt_ids.size(); }
  NodeId at(std::size_t prompt_index, int k) const {
    return assignment[prompt_index * static_cast<std::size_t>(params.K) +
                      static_cast<std::size_t>(k - 1)];
  }
  friend bool operator==(const SharePlan&, const SharePlan&) = default;
};

/// Builds the full assignment table and the deduplicated per-step active sets.
/// A node entering at step k inherits the state of its nearest ancestor-or-self
/// that was active at step k-1.
///
/// With `ablation` set, selection runs on the ablation tree's topology and
/// scores, and the plan's node ids refer to that tree. Execute such a plan
/// against `condition_tree(tree, ablation)`.
SharePlan compile_plan(const EmbeddingTree& tree, const ScheduleParams& params,
                       const EmbeddingTree* ablation = nullptr);

/// The tree a plan must be executed against: `tree` itself, or the ablation
/// topology carrying the real member-mean embeddings.
EmbeddingTree condition_tree(const EmbeddingTree& tree, const EmbeddingTree* ablation);

struct SavingsReport {
  std::vector<std::int64_t> per_step_active_counts;
  std::int64_t total = 0;
  std::int64_t baseline = 0;
  double savings_fraction = 0.0;
  int max_tree_depth_used = 0;
};

SavingsReport savings_report(const SharePlan& plan);

}  // namespace sharediff
