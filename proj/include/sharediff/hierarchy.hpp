#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sharediff/embedding.hpp"

namespace sharediff {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

struct TreeNode {
  NodeId id = kNoNode;
  NodeId parent = kNoNode;
  std::array<NodeId, 2> children{kNoNode, kNoNode};
  std::vector<std::int32_t> members;  // prompt indices, ascending
  Embedding embedding;                // mean of member leaf embeddings
  double score = 0.0;                 // heterogeneity after top-down clamping
  double raw_score = 0.0;             // merge distance before clamping
  int depth = 0;                      // root = 0

  bool is_leaf() const { return children[0] == kNoNode; }
};

/// One agglomeration step. `a` and `b` are node ids; the merged node gets the
/// next free id. Leaves are 0..N-1 in prompt order.
struct Merge {
  NodeId a = kNoNode;
  NodeId b = kNoNode;
  double distance = 0.0;
};

/// Binary merge tree over a prompt set. Node ids are canonical: leaves first
/// in prompt order, then internal nodes in merge order, so the root is always
/// the last node.
class EmbeddingTree {
 public:
  /// Assembles the tree from an ordered merge list (exactly N-1 merges).
  /// Internal embeddings are child sums divided by member count; scores are
  /// clamped top-down so that no child outranks its parent.
  static EmbeddingTree from_merges(const PromptSet& prompts, const std::vector<Merge>& merges);

  std::size_t size() const { return nodes_.size(); }
  std::size_t prompt_count() const { return prompt_ids_.size(); }
  std::size_t dimension() const { return nodes_.front().embedding.dimension(); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  NodeId root() const { return static_cast<NodeId>(nodes_.size()) - 1; }

  const std::vector<std::string>& prompt_ids() const { return prompt_ids_; }
  NodeId leaf_of(std::size_t prompt_index) const { return static_cast<NodeId>(prompt_index); }
  /// Throws UsageError for an unknown id.
  NodeId leaf_of(const std::string& prompt_id) const;

  double c_max() const { return nodes_.back().score; }
  int inversion_count() const { return inversion_count_; }
  /// Longest leaf-to-root edge count.
  int height() const { return height_; }

  /// FNV digest over node count and parent links; independent of embeddings.
  std::uint64_t structure_digest() const;

  /// Leaf embeddings as a prompt set (prompt text is not retained).
  PromptSet leaf_prompts() const;

  /// Low-level constructor used by the JSON reader; validates every invariant
  /// (node count, parent/child agreement, member unions, score monotonicity).
  EmbeddingTree(std::vector<std::string> prompt_ids, std::vector<TreeNode> nodes);

 private:
  EmbeddingTree() = default;
  void finalize();

  std::vector<std::string> prompt_ids_;
  std::vector<TreeNode> nodes_;
  std::unordered_map<std::string, NodeId> leaf_index_;
  int inversion_count_ = 0;
  int height_ = 0;
};

/// Centroid-linkage agglomerative clustering under cosine distance of mean
/// embeddings. Ties on distance go to the pair with the smallest
/// (min member index, max member index) key. Keeps a nearest-neighbour cache
/// per active cluster; the distance refresh after each merge runs in parallel.
EmbeddingTree build_tree(const PromptSet& prompts);

/// Same merge order as build_tree, found by recomputing every pairwise
/// distance each round. O(N^3 d); restricted to N <= 64.
EmbeddingTree reference_build_tree(const PromptSet& prompts);
inline constexpr std::size_t kReferenceMaxPrompts = 64;

/// Merge list of build_tree without assembling nodes.
std::vector<Merge> agglomerate(const PromptSet& prompts);
std::vector<Merge> reference_agglomerate(const PromptSet& prompts);

/// Leaf first, root last.
std::vector<NodeId> path_to_root(const EmbeddingTree& tree, const std::string& prompt_id);
std::vector<NodeId> path_to_root(const EmbeddingTree& tree, std::size_t prompt_index);

/// Same ids, embeddings replaced by independent random unit vectors keyed by
/// (seed, record index).
PromptSet randomize_encodings(const PromptSet& prompts, std::uint64_t seed);

/// Copy of `structure` (topology, scores) whose node embeddings are recomputed
/// as member means of `source`'s leaf embeddings. Prompt ids must match.
EmbeddingTree rebind_embeddings(const EmbeddingTree& structure, const EmbeddingTree& source);

/// Relabels nodes in pre-order with the child holding the smaller member
/// index visited first. Two trees are structurally equal iff their canonical
/// forms compare equal.
struct CanonicalNode {
  std::vector<std::int32_t> members;
  int parent = -1;
  std::array<int, 2> children{-1, -1};
  double raw_score = 0.0;
  double score = 0.0;
  friend bool operator==(const CanonicalNode&, const CanonicalNode&) = default;
};
std::vector<CanonicalNode> canonical_form(const EmbeddingTree& tree);

}  // namespace sharediff
