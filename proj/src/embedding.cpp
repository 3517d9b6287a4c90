#include "sharediff/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "sharediff/errors.hpp"

namespace sharediff {

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw UsageError("embedding must have dimension >= 1");
  for (double v : values_) {
    if (!std::isfinite(v)) throw UsageError("embedding has a non-finite entry");
  }
}

Embedding Embedding::from_f32(std::span<const float> values) {
  return Embedding(std::vector<double>(values.begin(), values.end()));
}

double Embedding::norm() const { return std::sqrt(dot(values_, values_)); }

Embedding Embedding::rounded_to_f32() const {
  std::vector<double> out(values_.size());
  std::transform(values_.begin(), values_.end(), out.begin(),
                 [](double v) { return static_cast<double>(static_cast<float>(v)); });
  return Embedding(std::move(out));
}

Embedding Embedding::normalized() const {
  const double n = norm();
  if (!(n > 0.0)) throw DomainError("cannot normalize a zero vector");
  std::vector<double> out(values_.size());
  std::transform(values_.begin(), values_.end(), out.begin(), [n](double v) { return v / n; });
  return Embedding(std::move(out));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw UsageError("cosine distance: dimension mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  const double aa = dot(a, a);
  const double bb = dot(b, b);
  if (!(aa > 0.0) || !(bb > 0.0)) throw DomainError("cosine distance of a zero vector");
  // sqrt(aa * bb) is exact for a == b, so identical vectors get distance 0;
  // fall back to separate roots if the product leaves the normal range.
  const double prod = aa * bb;
  const double denom = std::isnormal(prod) ? std::sqrt(prod) : std::sqrt(aa) * std::sqrt(bb);
  return dot(a, b) / denom;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  return std::clamp(1.0 - cosine_similarity(a, b), 0.0, 2.0);
}

Embedding mean_embedding(std::span<const Embedding> members) {
  if (members.empty()) throw UsageError("mean of an empty embedding list");
  const std::size_t d = members.front().dimension();
  std::vector<double> sum(d, 0.0);
  for (const auto& e : members) {
    if (e.dimension() != d) throw UsageError("mean embedding: dimension mismatch");
    for (std::size_t i = 0; i < d; ++i) sum[i] += e[i];
  }
  const auto n = static_cast<double>(members.size());
  for (double& v : sum) v /= n;
  return Embedding(std::move(sum));
}

PromptSet::PromptSet(std::vector<PromptRecord> records) : records_(std::move(records)) {
  if (records_.empty()) throw DataError("prompt set is empty");
  const std::size_t d = records_.front().embedding.dimension();
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.embedding.dimension() != d) {
      throw DataError("record " + std::to_string(i) + " (id '" + r.id + "'): dimension " +
                      std::to_string(r.embedding.dimension()) + ", expected " +
                      std::to_string(d));
    }
    if (!(r.embedding.norm() > 0.0)) {
      throw DataError("record " + std::to_string(i) + " (id '" + r.id + "'): zero embedding");
    }
    if (!index_.emplace(r.id, i).second) {
      throw DataError("record " + std::to_string(i) + ": duplicate id '" + r.id + "'");
    }
  }
}

std::optional<std::size_t> PromptSet::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t PromptSet::index_of(const std::string& id) const {
  if (auto i = find(id)) return *i;
  throw UsageError("unknown prompt id '" + id + "'");
}

}  // namespace sharediff
