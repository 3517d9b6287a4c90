#include "sharediff/hierarchy.hpp"

#include <algorithm>
#include <functional>

#include "merged_mean.hpp"
#include "sharediff/errors.hpp"
#include "sharediff/io_util.hpp"

namespace sharediff {
namespace {

std::vector<std::int32_t> merged_members(const std::vector<std::int32_t>& a,
                                         const std::vector<std::int32_t>& b) {
  std::vector<std::int32_t> out;
  out.reserve(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

EmbeddingTree EmbeddingTree::from_merges(const PromptSet& prompts,
                                         const std::vector<Merge>& merges) {
  const std::size_t n = prompts.size();
  if (merges.size() != n - 1) {
    throw UsageError("expected " + std::to_string(n - 1) + " merges, got " +
                     std::to_string(merges.size()));
  }
  EmbeddingTree tree;
  tree.prompt_ids_.reserve(n);
  tree.nodes_.reserve(2 * n - 1);
  std::vector<std::vector<double>> sums;
  sums.reserve(2 * n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    tree.prompt_ids_.push_back(prompts[i].id);
    TreeNode leaf;
    leaf.id = static_cast<NodeId>(i);
    leaf.members = {static_cast<std::int32_t>(i)};
    leaf.embedding = prompts[i].embedding;
    tree.nodes_.push_back(std::move(leaf));
    const auto v = prompts[i].embedding.values();
    sums.emplace_back(v.begin(), v.end());
  }
  for (const Merge& m : merges) {
    const auto next = static_cast<NodeId>(tree.nodes_.size());
    const bool valid = m.a >= 0 && m.b >= 0 && m.a < next && m.b < next && m.a != m.b &&
                       tree.nodes_[m.a].parent == kNoNode && tree.nodes_[m.b].parent == kNoNode;
    if (!valid) throw UsageError("invalid merge of nodes " + std::to_string(m.a) + ", " +
                                 std::to_string(m.b));
    TreeNode node;
    node.id = next;
    node.children = {m.a, m.b};
    node.members = merged_members(tree.nodes_[m.a].members, tree.nodes_[m.b].members);
    node.raw_score = m.distance;
    std::vector<double> sum(sums[m.a].size());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = sums[m.a][i] + sums[m.b][i];
    std::vector<double> mean(sum.size());
    detail::merged_mean(sum, static_cast<double>(node.members.size()),
                        tree.nodes_[m.a].embedding.values(), tree.nodes_[m.b].embedding.values(),
                        mean);
    node.embedding = Embedding(std::move(mean));
    sums.push_back(std::move(sum));
    tree.nodes_[m.a].parent = next;
    tree.nodes_[m.b].parent = next;
    tree.nodes_.push_back(std::move(node));
  }
  // Parents always carry larger ids than their children, so a descending
  // sweep sees each parent's final score first.
  for (auto it = tree.nodes_.rbegin(); it != tree.nodes_.rend(); ++it) {
    if (it->is_leaf()) {
      it->score = 0.0;
    } else if (it->parent == kNoNode) {
      it->score = it->raw_score;
    } else {
      it->score = std::min(it->raw_score, tree.nodes_[it->parent].score);
    }
  }
  tree.finalize();
  return tree;
}

EmbeddingTree::EmbeddingTree(std::vector<std::string> prompt_ids, std::vector<TreeNode> nodes)
    : prompt_ids_(std::move(prompt_ids)), nodes_(std::move(nodes)) {
  const std::size_t n = prompt_ids_.size();
  if (n == 0 || nodes_.size() != 2 * n - 1) {
    throw DataError("tree needs 2N-1 nodes for N=" + std::to_string(n) + " prompts, got " +
                    std::to_string(nodes_.size()));
  }
  const auto total = static_cast<NodeId>(nodes_.size());
  for (NodeId id = 0; id < total; ++id) {
    const TreeNode& node = nodes_[id];
    const std::string where = "tree node " + std::to_string(id);
    if (node.id != id) throw DataError(where + ": ids must be dense and ordered");
    if (static_cast<std::size_t>(id) < n) {
      if (!node.is_leaf() || node.members != std::vector<std::int32_t>{id}) {
        throw DataError(where + ": leaf " + std::to_string(id) + " must hold prompt " +
                        std::to_string(id) + " alone");
      }
      if (node.score != 0.0) throw DataError(where + ": leaf score must be 0");
    } else {
      const auto [a, b] = node.children;
      if (a < 0 || b < 0 || a >= id || b >= id || a == b) {
        throw DataError(where + ": children must be two distinct earlier nodes");
      }
      if (nodes_[a].parent != id || nodes_[b].parent != id) {
        throw DataError(where + ": child parent links disagree");
      }
      if (node.members != merged_members(nodes_[a].members, nodes_[b].members)) {
        throw DataError(where + ": members are not the union of its children");
      }
    }
    if (id == total - 1) {
      if (node.parent != kNoNode) throw DataError(where + ": root cannot have a parent");
    } else if (node.parent <= id || node.parent >= total) {
      throw DataError(where + ": parent must be a later node");
    } else if (node.score > nodes_[node.parent].score) {
      throw DataError(where + ": score exceeds parent score");
    }
    if (!(node.score >= 0.0) || !(node.raw_score >= 0.0)) {
      throw DataError(where + ": negative score");
    }
    if (node.embedding.dimension() != nodes_.front().embedding.dimension()) {
      throw DataError(where + ": embedding dimension mismatch");
    }
  }
  finalize();
}

void EmbeddingTree::finalize() {
  inversion_count_ = 0;
  height_ = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->depth = it->parent == kNoNode ? 0 : nodes_[it->parent].depth + 1;
    height_ = std::max(height_, it->depth);
    if (it->raw_score > it->score) ++inversion_count_;
  }
  leaf_index_.clear();
  leaf_index_.reserve(prompt_ids_.size());
  for (std::size_t i = 0; i < prompt_ids_.size(); ++i) {
    if (!leaf_index_.emplace(prompt_ids_[i], static_cast<NodeId>(i)).second) {
      throw DataError("duplicate prompt id '" + prompt_ids_[i] + "' in tree");
    }
  }
}

NodeId EmbeddingTree::leaf_of(const std::string& prompt_id) const {
  auto it = leaf_index_.find(prompt_id);
  if (it == leaf_index_.end()) throw UsageError("unknown prompt id '" + prompt_id + "'");
  return it->second;
}

std::uint64_t EmbeddingTree::structure_digest() const {
  std::string bytes;
  bytes.reserve(8 + nodes_.size() * 4);
  auto put = [&bytes](std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put(nodes_.size(), 8);
  for (const auto& node : nodes_) put(static_cast<std::uint32_t>(node.parent), 4);
  return fnv1a64(bytes);
}

PromptSet EmbeddingTree::leaf_prompts() const {
  std::vector<PromptRecord> records;
  records.reserve(prompt_ids_.size());
  for (std::size_t i = 0; i < prompt_ids_.size(); ++i) {
    records.push_back({prompt_ids_[i], std::nullopt, nodes_[i].embedding});
  }
  return PromptSet(std::move(records));
}

std::vector<NodeId> path_to_root(const EmbeddingTree& tree, std::size_t prompt_index) {
  if (prompt_index >= tree.prompt_count()) {
    throw UsageError("prompt index " + std::to_string(prompt_index) + " out of range");
  }
  std::vector<NodeId> path;
  path.reserve(static_cast<std::size_t>(tree.height()) + 1);
  for (NodeId id = tree.leaf_of(prompt_index); id != kNoNode; id = tree.node(id).parent) {
    path.push_back(id);
  }
  return path;
}

std::vector<NodeId> path_to_root(const EmbeddingTree& tree, const std::string& prompt_id) {
  return path_to_root(tree, static_cast<std::size_t>(tree.leaf_of(prompt_id)));
}

PromptSet randomize_encodings(const PromptSet& prompts, std::uint64_t seed) {
  std::vector<PromptRecord> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto stream = make_stream(seed, StreamTag::kRandomEncoding, {i});
    out.push_back({prompts[i].id, prompts[i].prompt,
                   random_unit_vector(prompts.dimension(), stream)});
  }
  return PromptSet(std::move(out));
}

EmbeddingTree rebind_embeddings(const EmbeddingTree& structure, const EmbeddingTree& source) {
  if (structure.prompt_ids() != source.prompt_ids()) {
    throw UsageError("rebind_embeddings: prompt ids differ between trees");
  }
  std::vector<TreeNode> nodes = structure.nodes();
  std::vector<std::vector<double>> sums(nodes.size());
  for (auto& node : nodes) {
    if (node.is_leaf()) {
      node.embedding = source.node(node.id).embedding;
      const auto v = node.embedding.values();
      sums[node.id].assign(v.begin(), v.end());
      continue;
    }
    const auto& sa = sums[node.children[0]];
    const auto& sb = sums[node.children[1]];
    std::vector<double> sum(sa.size());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = sa[i] + sb[i];
    std::vector<double> mean(sum.size());
    detail::merged_mean(sum, static_cast<double>(node.members.size()),
                        nodes[node.children[0]].embedding.values(),
                        nodes[node.children[1]].embedding.values(), mean);
    node.embedding = Embedding(std::move(mean));
    sums[node.id] = std::move(sum);
  }
  return EmbeddingTree(structure.prompt_ids(), std::move(nodes));
}

std::vector<CanonicalNode> canonical_form(const EmbeddingTree& tree) {
  std::vector<CanonicalNode> out;
  out.reserve(tree.size());
  std::function<int(NodeId, int)> visit = [&](NodeId id, int parent) -> int {
    const TreeNode& node = tree.node(id);
    const int label = static_cast<int>(out.size());
    out.push_back({node.members, parent, {-1, -1}, node.raw_score, node.score});
    if (!node.is_leaf()) {
      auto [a, b] = node.children;
      if (tree.node(b).members.front() < tree.node(a).members.front()) std::swap(a, b);
      const int la = visit(a, label);
      const int lb = visit(b, label);
      out[label].children = {la, lb};
    }
    return label;
  };
  visit(tree.root(), -1);
  return out;
}

}  // namespace sharediff
