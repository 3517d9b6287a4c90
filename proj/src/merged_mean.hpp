#pragma once

#include <algorithm>
#include <span>

namespace sharediff::detail {

// Mean of a merged cluster from its running sum. When both halves already
// share a mean bit for bit, that mean is kept: re-dividing the sum drifts by
// an ulp for repeated vectors, which would give exact duplicates a positive
// distance. `out` may alias `mean_a`.
inline void merged_mean(std::span<const double> sum, double count, std::span<const double> mean_a,
                        std::span<const double> mean_b, std::span<double> out) {
  if (std::equal(mean_a.begin(), mean_a.end(), mean_b.begin(), mean_b.end())) {
    if (out.data() != mean_a.data()) std::copy(mean_a.begin(), mean_a.end(), out.begin());
    return;
  }
  for (std::size_t i = 0; i < sum.size(); ++i) out[i] = sum[i] / count;
}

}  // namespace sharediff::detail
