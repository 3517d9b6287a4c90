#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sharediff/rng.hpp"

namespace sharediff {

/// Dense real vector used both as a prompt representation and as the
/// denoiser condition. Values are held in double precision; prompt embeddings
/// read from disk are f32-exact.
class Embedding {
 public:
  Embedding() = default;
  /// Throws UsageError on an empty vector or non-finite entries.
  explicit Embedding(std::vector<double> values);

  static Embedding from_f32(std::span<const float> values);

  std::size_t dimension() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double norm() const;

  /// Same vector with every entry rounded to the nearest f32.
  Embedding rounded_to_f32() const;
  /// Unit-norm copy; throws DomainError on a zero vector.
  Embedding normalized() const;

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);

/// 1 - cos(a, b), clamped to [0, 2]. Zero-norm input is a DomainError and a
/// dimension mismatch is a UsageError.
double cosine_distance(std::span<const double> a, std::span<const double> b);
inline double cosine_distance(const Embedding& a, const Embedding& b) {
  return cosine_distance(a.values(), b.values());
}
/// cos(a, b) without clamping; same error contract as cosine_distance.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Entrywise arithmetic mean (sum in list order, then divide).
Embedding mean_embedding(std::span<const Embedding> members);

struct PromptRecord {
  std::string id;
  std::optional<std::string> prompt;
  Embedding embedding;
};

/// Validated, ordered collection of prompts: non-empty, unique ids, uniform
/// dimension, every embedding finite with positive norm.
class PromptSet {
 public:
  explicit PromptSet(std::vector<PromptRecord> records);

  std::size_t size() const { return records_.size(); }
  std::size_t dimension() const { return records_.front().embedding.dimension(); }
  const PromptRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<PromptRecord>& records() const { return records_; }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  std::optional<std::size_t> find(const std::string& id) const;
  /// Throws UsageError for unknown ids.
  std::size_t index_of(const std::string& id) const;

 private:
  std::vector<PromptRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// File formats

enum class PromptFormat { kJsonl, kBinary };

struct LoadOptions {
  bool normalize = false;  // L2-normalize each embedding at ingestion
};

/// Sniffs the "SHDF" magic; anything else is treated as JSONL.
PromptFormat detect_format(const std::filesystem::path& path);

/// Throws DataError naming the offending record (line number and id where
/// available) on malformed input, duplicate ids or dimension mismatch.
PromptSet load_prompt_set(const std::filesystem::path& path, PromptFormat format,
                          const LoadOptions& options = {});
PromptSet load_prompt_set(const std::filesystem::path& path, const LoadOptions& options = {});

/// Embeddings are written as f32. Binary files carry no ids; on load the
/// records are named by their decimal index.
void save_prompt_set(const PromptSet& prompts, const std::filesystem::path& path,
                     PromptFormat format);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::size_t clusters = 1;
  std::size_t per_cluster = 1;
  std::size_t dimension = 16;
  double jitter = 0.0;
  std::uint64_t seed = 0;
};

/// `clusters` random unit centers; record i belongs to cluster i / per_cluster
/// and equals its center plus isotropic Gaussian jitter, renormalized. With
/// zero jitter every record equals its center bit for bit. Each center and
/// record draws from its own counter-based stream, so the output does not
/// depend on generation order.
PromptSet generate_synthetic(const SyntheticSpec& spec);

inline std::size_t planted_label(const SyntheticSpec& spec, std::size_t record) {
  return record / spec.per_cluster;
}

/// Isotropic Gaussian direction drawn from `stream`, rounded to f32.
Embedding random_unit_vector(std::size_t dimension, RandomStream& stream);

}  // namespace sharediff
