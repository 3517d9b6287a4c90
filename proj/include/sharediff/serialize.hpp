#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "sharediff/diffusion.hpp"
#include "sharediff/hierarchy.hpp"
#include "sharediff/metrics.hpp"
#include "sharediff/planner.hpp"

namespace sharediff {

// Tree: {"nodes":[{"id","parent","children","members","score","raw_score",
// "embedding"}],"root","c_max","inversion_count"}. Members are prompt ids.
std::string tree_to_json(const EmbeddingTree& tree);
/// Throws DataError on schema violations or broken tree invariants.
EmbeddingTree tree_from_json(std::string_view text);

// Plan: {"K","tau","phi_variant","assignment":[{"id","nodes":[...]}],
// "steps":[{"k","active":[...],"inherit":{"<node>":<src>|"FRESH"}}],
// "total_evaluations","baseline_evaluations","savings_fraction", ...}.
std::string plan_to_json(const SharePlan& plan);
SharePlan plan_from_json(std::string_view text);

/// One `{"id","sample":[f32...],"trace":[[node,k],...]}` line per prompt.
std::string samples_to_jsonl(const GenerationOutput& outputs);

std::string metrics_to_json(const RunMetrics& metrics, const ScheduleParams& params,
                            std::size_t prompt_count);

std::string phi_variant_name(PhiVariant v);
PhiVariant parse_phi_variant(std::string_view name);
std::string curve_name(ScheduleCurve c);
ScheduleCurve parse_curve(std::string_view name);
std::string variant_name(SamplerVariant v);
SamplerVariant parse_variant(std::string_view name);

/// World config: {"data_dimension","target_std","condition_map":"identity"|
/// {"seed":...},"schedule":{"K","curve","variant"},"master_seed"}.
struct WorldConfig {
  std::optional<std::size_t> data_dimension;  // defaults to the embedding dimension
  double target_std = 0.1;
  std::optional<std::uint64_t> condition_map_seed;  // nullopt = identity
  int K = 40;
  ScheduleCurve curve = ScheduleCurve::kCosine;
  SamplerVariant variant = SamplerVariant::kDeterministic;
  std::uint64_t master_seed = 0;
};

/// Missing keys keep their defaults. Throws UsageError on bad values.
WorldConfig parse_world_config(std::string_view text);
std::string world_config_to_json(const WorldConfig& config);
/// Throws UsageError if an identity map is requested with m != d.
ToyWorld make_world(const WorldConfig& config, std::size_t embedding_dimension);

}  // namespace sharediff
