#include "sharediff/serialize.hpp"

#include <charconv>
#include <cstdio>

#include <json.hpp>

#include "sharediff/errors.hpp"
#include "sharediff/io_util.hpp"

namespace sharediff {
namespace {

using nlohmann::ordered_json;

ordered_json parse_or_throw(std::string_view text, const char* what) {
  try {
    return ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw DataError(std::string(what) + ": malformed JSON (" + e.what() + ")");
  }
}

template <typename T>
T field(const ordered_json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw DataError(std::string(what) + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw DataError(std::string(what) + ": bad \"" + key + "\" (" + e.what() + ")");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string tree_to_json(const EmbeddingTree& tree) {
  ordered_json nodes = ordered_json::array();
  for (const auto& node : tree.nodes()) {
    ordered_json members = ordered_json::array();
    for (auto idx : node.members) members.push_back(tree.prompt_ids()[idx]);
    ordered_json children = ordered_json::array();
    if (!node.is_leaf()) children = {node.children[0], node.children[1]};
    const auto ev = node.embedding.values();
    ordered_json values = std::vector<double>(ev.begin(), ev.end());
    nodes.push_back({{"id", node.id},
                     {"parent", node.parent == kNoNode ? ordered_json(nullptr)
                                                       : ordered_json(node.parent)},
                     {"children", std::move(children)},
                     {"members", std::move(members)},
                     {"score", node.score},
                     {"raw_score", node.raw_score},
                     {"embedding", std::move(values)}});
  }
  ordered_json j = {{"nodes", std::move(nodes)},
                    {"root", tree.root()},
                    {"c_max", tree.c_max()},
                    {"inversion_count", tree.inversion_count()}};
  return j.dump() + "\n";
}

EmbeddingTree tree_from_json(std::string_view text) {
  constexpr const char* what = "tree JSON";
  const auto j = parse_or_throw(text, what);
  if (!j.is_object() || !j.contains("nodes") || !j["nodes"].is_array() || j["nodes"].empty()) {
    throw DataError("tree JSON: \"nodes\" must be a non-empty array");
  }
  const auto& jn = j["nodes"];
  if (jn.size() % 2 == 0) throw DataError("tree JSON: node count must be odd (2N-1)");
  const std::size_t n = (jn.size() + 1) / 2;

  std::vector<std::string> prompt_ids(n);
  std::unordered_map<std::string, std::int32_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    const auto members = field<std::vector<std::string>>(jn[i], "members", what);
    if (members.size() != 1) throw DataError("tree JSON: leaf " + std::to_string(i) +
                                             " must have exactly one member");
    prompt_ids[i] = members.front();
    if (!index.emplace(members.front(), static_cast<std::int32_t>(i)).second) {
      throw DataError("tree JSON: duplicate prompt id '" + members.front() + "'");
    }
  }

  std::vector<TreeNode> nodes;
  nodes.reserve(jn.size());
  for (const auto& e : jn) {
    TreeNode node;
    node.id = field<NodeId>(e, "id", what);
    node.parent = e.contains("parent") && !e["parent"].is_null()
                      ? field<NodeId>(e, "parent", what)
                      : kNoNode;
    const auto children = field<std::vector<NodeId>>(e, "children", what);
    if (children.size() == 2) {
      node.children = {children[0], children[1]};
    } else if (!children.empty()) {
      throw DataError("tree JSON: node " + std::to_string(node.id) + " needs 0 or 2 children");
    }
    for (const auto& id : field<std::vector<std::string>>(e, "members", what)) {
      auto it = index.find(id);
      if (it == index.end()) throw DataError("tree JSON: unknown member '" + id + "'");
      node.members.push_back(it->second);
    }
    std::sort(node.members.begin(), node.members.end());
    node.score = field<double>(e, "score", what);
    node.raw_score = field<double>(e, "raw_score", what);
    try {
      node.embedding = Embedding(field<std::vector<double>>(e, "embedding", what));
    } catch (const UsageError& err) {
      throw DataError("tree JSON: node " + std::to_string(node.id) + ": " + err.what());
    }
    nodes.push_back(std::move(node));
  }
  EmbeddingTree tree(std::move(prompt_ids), std::move(nodes));
  if (j.contains("root") && field<NodeId>(j, "root", what) != tree.root()) {
    throw DataError("tree JSON: root must be the last node");
  }
  return tree;
}

std::string phi_variant_name(PhiVariant v) { return v == PhiVariant::kMain ? "main" : "appendix"; }

PhiVariant parse_phi_variant(std::string_view name) {
  if (name == "main") return PhiVariant::kMain;
  if (name == "appendix") return PhiVariant::kAppendix;
  throw UsageError("unknown phi variant '" + std::string(name) + "'");
}

std::string curve_name(ScheduleCurve c) {
  return c == ScheduleCurve::kCosine ? "cosine" : "linear-beta";
}

ScheduleCurve parse_curve(std::string_view name) {
  if (name == "cosine") return ScheduleCurve::kCosine;
  if (name == "linear-beta" || name == "linear_beta") return ScheduleCurve::kLinearBeta;
  throw UsageError("unknown schedule curve '" + std::string(name) + "'");
}

std::string variant_name(SamplerVariant v) {
  return v == SamplerVariant::kDeterministic ? "deterministic" : "ancestral";
}

SamplerVariant parse_variant(std::string_view name) {
  if (name == "deterministic") return SamplerVariant::kDeterministic;
  if (name == "ancestral") return SamplerVariant::kAncestral;
  throw UsageError("unknown sampler variant '" + std::string(name) + "'");
}

std::string plan_to_json(const SharePlan& plan) {
  ordered_json assignment = ordered_json::array();
  for (std::size_t y = 0; y < plan.prompt_count(); ++y) {
    ordered_json row = ordered_json::array();
    for (int k = 1; k <= plan.params.K; ++k) row.push_back(plan.at(y, k));
    assignment.push_back({{"id", plan.prompt_ids[y]}, {"nodes", std::move(row)}});
  }
  ordered_json steps = ordered_json::array();
  for (const auto& step : plan.steps) {
    ordered_json inherit = ordered_json::object();
    for (std::size_t i = 0; i < step.active.size(); ++i) {
      const NodeId src = step.inherit_from[i];
      inherit[std::to_string(step.active[i])] =
          src == kFresh ? ordered_json("FRESH") : ordered_json(src);
    }
    steps.push_back({{"k", step.k}, {"active", step.active}, {"inherit", std::move(inherit)}});
  }
  ordered_json j = {{"K", plan.params.K},
                    {"tau", plan.params.tau},
                    {"phi_variant", phi_variant_name(plan.params.phi_variant)},
                    {"assignment", std::move(assignment)},
                    {"steps", std::move(steps)},
                    {"total_evaluations", plan.total_evaluations},
                    {"baseline_evaluations", plan.baseline_evaluations},
                    {"savings_fraction", plan.savings_fraction},
                    {"max_depth_used", plan.max_depth_used},
                    {"node_count", plan.node_count},
                    {"structure_digest", hex64(plan.structure_digest)}};
  return j.dump() + "\n";
}

SharePlan plan_from_json(std::string_view text) {
  constexpr const char* what = "plan JSON";
  const auto j = parse_or_throw(text, what);
  SharePlan plan;
  plan.params.K = field<int>(j, "K", what);
  plan.params.tau = field<double>(j, "tau", what);
  try {
    plan.params.phi_variant = parse_phi_variant(field<std::string>(j, "phi_variant", what));
    plan.params.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string(what) + ": " + e.what());
  }
  const auto K = static_cast<std::size_t>(plan.params.K);
  if (!j.contains("assignment") || !j["assignment"].is_array()) {
    throw DataError("plan JSON: missing \"assignment\" array");
  }
  for (const auto& row : j["assignment"]) {
    plan.prompt_ids.push_back(field<std::string>(row, "id", what));
    const auto nodes = field<std::vector<NodeId>>(row, "nodes", what);
    if (nodes.size() != K) throw DataError("plan JSON: assignment rows need K entries");
    plan.assignment.insert(plan.assignment.end(), nodes.begin(), nodes.end());
  }
  if (!j.contains("steps") || !j["steps"].is_array() || j["steps"].size() != K) {
    throw DataError("plan JSON: \"steps\" must hold K entries");
  }
  for (const auto& js : j["steps"]) {
    PlanStep step;
    step.k = field<int>(js, "k", what);
    step.active = field<std::vector<NodeId>>(js, "active", what);
    if (!js.contains("inherit") || !js["inherit"].is_object()) {
      throw DataError("plan JSON: step " + std::to_string(step.k) + " lacks \"inherit\"");
    }
    const auto& inh = js["inherit"];
    for (NodeId c : step.active) {
      const std::string key = std::to_string(c);
      if (!inh.contains(key)) throw DataError("plan JSON: no inherit edge for node " + key);
      const auto& src = inh[key];
      if (src.is_string() && src.get<std::string>() == "FRESH") {
        step.inherit_from.push_back(kFresh);
      } else if (src.is_number_integer()) {
        step.inherit_from.push_back(src.get<NodeId>());
      } else {
        throw DataError("plan JSON: bad inherit source for node " + key);
      }
    }
    plan.total_evaluations += static_cast<std::int64_t>(step.active.size());
    plan.steps.push_back(std::move(step));
  }
  plan.baseline_evaluations =
      static_cast<std::int64_t>(K) * static_cast<std::int64_t>(plan.prompt_ids.size());
  if (plan.baseline_evaluations == 0) throw DataError("plan JSON: no prompts");
  plan.savings_fraction = 1.0 - static_cast<double>(plan.total_evaluations) /
                                    static_cast<double>(plan.baseline_evaluations);
  if (field<std::int64_t>(j, "total_evaluations", what) != plan.total_evaluations) {
    throw DataError("plan JSON: total_evaluations disagrees with the active sets");
  }
  plan.max_depth_used = j.value("max_depth_used", 0);
  plan.node_count = field<std::size_t>(j, "node_count", what);
  const auto digest = field<std::string>(j, "structure_digest", what);
  auto res = std::from_chars(digest.data(), digest.data() + digest.size(), plan.structure_digest,
                             16);
  if (res.ec != std::errc{}) throw DataError("plan JSON: bad structure_digest");
  return plan;
}

std::string samples_to_jsonl(const GenerationOutput& outputs) {
  std::string out;
  for (const auto& p : outputs.prompts) {
    out += "{\"id\":";
    out += nlohmann::json(p.id).dump();
    out += ",\"sample\":";
    append_f32_array(out, p.sample);
    out += ",\"trace\":[";
    for (std::size_t i = 0; i < p.trace.size(); ++i) {
      if (i) out += ',';
      out += '[' + std::to_string(p.trace[i].node) + ',' + std::to_string(p.trace[i].k) + ']';
    }
    out += "]}\n";
  }
  return out;
}

std::string metrics_to_json(const RunMetrics& m, const ScheduleParams& params,
                            std::size_t prompt_count) {
  ordered_json j = {{"K", params.K},
                    {"tau", params.tau},
                    {"phi_variant", phi_variant_name(params.phi_variant)},
                    {"N", prompt_count},
                    {"evaluations", m.evaluations_total},
                    {"baseline", m.baseline},
                    {"savings_fraction", m.savings_fraction},
                    {"steps_per_image", m.steps_per_image},
                    {"quality_mse", m.quality_mse},
                    {"wasserstein2", m.wasserstein2},
                    {"diversity", m.diversity ? ordered_json(*m.diversity)
                                              : ordered_json(nullptr)}};
  return j.dump(2) + "\n";
}

WorldConfig parse_world_config(std::string_view text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw UsageError(std::string("world config: malformed JSON (") + e.what() + ")");
  }
  if (!j.is_object()) throw UsageError("world config must be a JSON object");
  WorldConfig c;
  try {
    if (j.contains("data_dimension") && !j["data_dimension"].is_null()) {
      c.data_dimension = j["data_dimension"].get<std::size_t>();
    }
    c.target_std = j.value("target_std", c.target_std);
    if (j.contains("condition_map")) {
      const auto& cm = j["condition_map"];
      if (cm.is_string()) {
        if (cm.get<std::string>() != "identity") {
          throw UsageError("condition_map must be \"identity\" or {\"seed\": ...}");
        }
      } else if (cm.is_object() && cm.contains("seed")) {
        c.condition_map_seed = cm["seed"].get<std::uint64_t>();
      } else {
        throw UsageError("condition_map must be \"identity\" or {\"seed\": ...}");
      }
    }
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      c.K = s.value("K", c.K);
      if (s.contains("curve")) c.curve = parse_curve(s["curve"].get<std::string>());
      if (s.contains("variant")) c.variant = parse_variant(s["variant"].get<std::string>());
    }
    c.master_seed = j.value("master_seed", c.master_seed);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("world config: ") + e.what());
  }
  if (c.K < 1) throw UsageError("world config: schedule.K must be >= 1");
  if (!(c.target_std > 0.0)) throw UsageError("world config: target_std must be > 0");
  return c;
}

std::string world_config_to_json(const WorldConfig& c) {
  ordered_json j;
  j["data_dimension"] = c.data_dimension ? ordered_json(*c.data_dimension) : ordered_json(nullptr);
  j["target_std"] = c.target_std;
  j["condition_map"] = c.condition_map_seed ? ordered_json{{"seed", *c.condition_map_seed}}
                                            : ordered_json("identity");
  j["schedule"] = {{"K", c.K}, {"curve", curve_name(c.curve)}, {"variant", variant_name(c.variant)}};
  j["master_seed"] = c.master_seed;
  return j.dump(2) + "\n";
}

ToyWorld make_world(const WorldConfig& config, std::size_t embedding_dimension) {
  const std::size_t m = config.data_dimension.value_or(embedding_dimension);
  if (config.condition_map_seed) {
    return ToyWorld::seeded(m, embedding_dimension, config.target_std, *config.condition_map_seed);
  }
  if (m != embedding_dimension) {
    throw UsageError("identity condition map needs data_dimension (" + std::to_string(m) +
                     ") equal to the embedding dimension (" +
                     std::to_string(embedding_dimension) + ")");
  }
  return ToyWorld::identity(m, config.target_std);
}

}  // namespace sharediff
