#pragma once

// Independent, deliberately naive re-derivations used as test oracles. None of
// these call into the library's algorithms.

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <vector>

namespace sharediff::oracle {

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return std::clamp(1.0 - ab / (std::sqrt(aa) * std::sqrt(bb)), 0.0, 2.0);
}

struct OracleMerge {
  std::vector<int> left, right;  // member prompt indices, sorted
  double distance;
};

/// Greedy centroid linkage: each round scans every live pair, computing the
/// member means from scratch.
inline std::vector<OracleMerge> centroid_linkage(const std::vector<std::vector<double>>& points) {
  std::vector<std::vector<int>> clusters;
  for (int i = 0; i < static_cast<int>(points.size()); ++i) clusters.push_back({i});
  auto mean = [&](const std::vector<int>& members) {
    std::vector<double> sum(points[0].size(), 0.0);
    for (int m : members) {
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += points[m][j];
    }
    for (auto& v : sum) v /= static_cast<double>(members.size());
    return sum;
  };
  std::vector<OracleMerge> merges;
  while (clusters.size() > 1) {
    auto best = std::make_tuple(std::numeric_limits<double>::infinity(), 0, 0);
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double d = cosine_distance(mean(clusters[i]), mean(clusters[j]));
        const int lo = std::min(clusters[i].front(), clusters[j].front());
        const int hi = std::max(clusters[i].front(), clusters[j].front());
        const auto key = std::make_tuple(d, lo, hi);
        if (key < best) {
          best = key;
          bi = i;
          bj = j;
        }
      }
    }
    OracleMerge m{clusters[bi], clusters[bj], std::get<0>(best)};
    std::vector<int> joined = clusters[bi];
    joined.insert(joined.end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(joined.begin(), joined.end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    clusters[bi] = joined;
    merges.push_back(m);
  }
  return merges;
}

/// phi on the main schedule, straight from its definition.
inline double phi_main(int k, int K, double tau) { return tau * (1.0 - double(k) / K); }

}  // namespace sharediff::oracle
