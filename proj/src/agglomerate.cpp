#include <algorithm>
#include <limits>
#include <tuple>

#include "merged_mean.hpp"
#include "sharediff/errors.hpp"
#include "sharediff/hierarchy.hpp"

namespace sharediff {
namespace {

// Total order on candidate merges: distance, then the member-index tie-break.
struct PairKey {
  double distance;
  std::int32_t lo;
  std::int32_t hi;

  friend bool operator<(const PairKey& x, const PairKey& y) {
    return std::tie(x.distance, x.lo, x.hi) < std::tie(y.distance, y.lo, y.hi);
  }
};

class ClusterState {
 public:
  explicit ClusterState(const PromptSet& prompts)
      : n_(prompts.size()), d_(prompts.dimension()), sum_(n_), mean_(n_), count_(n_, 1),
        min_member_(n_), node_(n_), nn_(n_, -1), dist_(n_ * n_, 0.0) {
    for (std::size_t i = 0; i < n_; ++i) {
      const auto v = prompts[i].embedding.values();
      sum_[i].assign(v.begin(), v.end());
      mean_[i] = sum_[i];
      min_member_[i] = static_cast<std::int32_t>(i);
      node_[i] = static_cast<NodeId>(i);
      active_.push_back(static_cast<std::int32_t>(i));
    }
    const auto n = static_cast<std::int64_t>(n_);
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = i + 1; j < n; ++j) {
        const double dij = cosine_distance(mean_[i], mean_[j]);
        dist_[i * n + j] = dij;
        dist_[j * n + i] = dij;
      }
    }
    for (std::int32_t s : active_) refresh_nn(s);
  }

  std::vector<Merge> run() {
    std::vector<Merge> merges;
    merges.reserve(n_ - 1);
    while (active_.size() > 1) {
      std::int32_t s = active_.front();
      for (std::int32_t u : active_) {
        if (key(u, nn_[u]) < key(s, nn_[s])) s = u;
      }
      const std::int32_t t = nn_[s];
      merges.push_back({node_[s], node_[t], distance(s, t)});
      merge_into(s, t, static_cast<NodeId>(n_ + merges.size() - 1));
    }
    return merges;
  }

 private:
  double distance(std::int32_t a, std::int32_t b) const { return dist_[a * n_ + b]; }

  PairKey key(std::int32_t a, std::int32_t b) const {
    return {distance(a, b), std::min(min_member_[a], min_member_[b]),
            std::max(min_member_[a], min_member_[b])};
  }

  void refresh_nn(std::int32_t s) {
    std::int32_t best = -1;
    for (std::int32_t u : active_) {
      if (u != s && (best < 0 || key(s, u) < key(s, best))) best = u;
    }
    nn_[s] = best;
  }

  void merge_into(std::int32_t s, std::int32_t t, NodeId new_node) {
    for (std::size_t i = 0; i < d_; ++i) sum_[s][i] = sum_[s][i] + sum_[t][i];
    count_[s] += count_[t];
    detail::merged_mean(sum_[s], static_cast<double>(count_[s]), mean_[s], mean_[t], mean_[s]);
    if (!(dot(mean_[s], mean_[s]) > 0.0)) {
      throw DomainError("cluster mean collapsed to the zero vector; cosine distance undefined");
    }
    min_member_[s] = std::min(min_member_[s], min_member_[t]);
    node_[s] = new_node;
    active_.erase(std::find(active_.begin(), active_.end(), t));

    const auto m = static_cast<std::int64_t>(active_.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
      const std::int32_t u = active_[i];
      if (u == s) continue;
      const double du = cosine_distance(mean_[s], mean_[u]);
      dist_[static_cast<std::size_t>(s) * n_ + u] = du;
      dist_[static_cast<std::size_t>(u) * n_ + s] = du;
    }
    for (std::int32_t u : active_) {
      if (u == s) continue;
      if (nn_[u] == s || nn_[u] == t) {
        refresh_nn(u);
      } else if (key(u, s) < key(u, nn_[u])) {
        nn_[u] = s;
      }
    }
    refresh_nn(s);
  }

  std::size_t n_;
  std::size_t d_;
  std::vector<std::vector<double>> sum_;
  std::vector<std::vector<double>> mean_;
  std::vector<std::int64_t> count_;
  std::vector<std::int32_t> min_member_;
  std::vector<NodeId> node_;
  std::vector<std::int32_t> nn_;
  std::vector<std::int32_t> active_;
  std::vector<double> dist_;  // n x n, rows of merged-away slots go stale
};

}  // namespace

std::vector<Merge> agglomerate(const PromptSet& prompts) {
  if (prompts.size() == 1) return {};
  return ClusterState(prompts).run();
}

EmbeddingTree build_tree(const PromptSet& prompts) {
  return EmbeddingTree::from_merges(prompts, agglomerate(prompts));
}

std::vector<Merge> reference_agglomerate(const PromptSet& prompts) {
  const std::size_t n = prompts.size();
  if (n > kReferenceMaxPrompts) {
    throw UsageError("reference clusterer is limited to N <= " +
                     std::to_string(kReferenceMaxPrompts));
  }
  struct Cluster {
    NodeId node;
    std::vector<double> sum;
    std::vector<double> mean;
    std::int64_t count;
    std::int32_t min_member;
  };
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = prompts[i].embedding.values();
    clusters.push_back({static_cast<NodeId>(i), {v.begin(), v.end()}, {v.begin(), v.end()}, 1,
                        static_cast<std::int32_t>(i)});
  }
  std::vector<Merge> merges;
  while (clusters.size() > 1) {
    std::size_t best_i = 0, best_j = 1;
    double best_d = std::numeric_limits<double>::infinity();
    std::int32_t best_lo = 0, best_hi = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double dij = cosine_distance(clusters[i].mean, clusters[j].mean);
        const std::int32_t lo = std::min(clusters[i].min_member, clusters[j].min_member);
        const std::int32_t hi = std::max(clusters[i].min_member, clusters[j].min_member);
        if (std::tie(dij, lo, hi) < std::tie(best_d, best_lo, best_hi)) {
          best_i = i, best_j = j, best_d = dij, best_lo = lo, best_hi = hi;
        }
      }
    }
    Cluster& a = clusters[best_i];
    const Cluster& b = clusters[best_j];
    merges.push_back({a.node, b.node, best_d});
    for (std::size_t k = 0; k < a.sum.size(); ++k) a.sum[k] += b.sum[k];
    a.count += b.count;
    detail::merged_mean(a.sum, static_cast<double>(a.count), a.mean, b.mean, a.mean);
    a.min_member = std::min(a.min_member, b.min_member);
    a.node = static_cast<NodeId>(n + merges.size() - 1);
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_j));
  }
  return merges;
}

EmbeddingTree reference_build_tree(const PromptSet& prompts) {
  return EmbeddingTree::from_merges(prompts, reference_agglomerate(prompts));
}

}  // namespace sharediff
