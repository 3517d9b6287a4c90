#include <cmath>

#include "sharediff/embedding.hpp"
#include "sharediff/errors.hpp"

namespace sharediff {

Embedding random_unit_vector(std::size_t dimension, RandomStream& stream) {
  std::vector<double> v(dimension);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (double& x : v) {
      x = stream.normal();
      norm2 += x * x;
    }
  } while (!(norm2 > 0.0));
  const double n = std::sqrt(norm2);
  for (double& x : v) x /= n;
  return Embedding(std::move(v)).rounded_to_f32();
}

PromptSet generate_synthetic(const SyntheticSpec& spec) {
  if (spec.clusters < 1 || spec.per_cluster < 1 || spec.dimension < 1) {
    throw UsageError("synthetic spec needs clusters, per_cluster, dimension >= 1");
  }
  if (!(spec.jitter >= 0.0) || !std::isfinite(spec.jitter)) {
    throw UsageError("synthetic jitter must be finite and >= 0");
  }
  std::vector<Embedding> centers;
  centers.reserve(spec.clusters);
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    auto stream = make_stream(spec.seed, StreamTag::kSyntheticCenter, {c});
    centers.push_back(random_unit_vector(spec.dimension, stream));
  }

  const std::size_t n = spec.clusters * spec.per_cluster;
  std::vector<PromptRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = planted_label(spec, i);
    PromptRecord rec;
    rec.id = "c" + std::to_string(label) + "-" + std::to_string(i % spec.per_cluster);
    rec.prompt = "cluster " + std::to_string(label);
    if (spec.jitter == 0.0) {
      rec.embedding = centers[label];
    } else {
      auto stream = make_stream(spec.seed, StreamTag::kSyntheticRecord, {i});
      std::vector<double> v(centers[label].values().begin(), centers[label].values().end());
      for (double& x : v) x += spec.jitter * stream.normal();
      rec.embedding = Embedding(std::move(v)).normalized().rounded_to_f32();
    }
    records.push_back(std::move(rec));
  }
  return PromptSet(std::move(records));
}

}  // namespace sharediff
