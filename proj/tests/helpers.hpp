#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "sharediff/embedding.hpp"
#include "sharediff/rng.hpp"

namespace sharediff::testing {

inline PromptSet make_prompts(const std::vector<std::vector<double>>& rows) {
  std::vector<PromptRecord> records;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    records.push_back({"p" + std::to_string(i), std::nullopt, Embedding(rows[i])});
  }
  return PromptSet(std::move(records));
}

inline std::vector<double> unit2(double x, double y) {
  const double n = std::hypot(x, y);
  return {x / n, y / n};
}

/// N random Gaussian vectors (not normalized) of dimension d.
inline PromptSet random_prompts(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  auto stream = RandomStream(seed, 0xC0FFEE);
  for (auto& r : rows) {
    for (auto& v : r) v = static_cast<float>(stream.normal());
  }
  return make_prompts(rows);
}

/// N copies of the same vector.
inline PromptSet duplicated_prompts(std::size_t n, std::vector<double> v) {
  return make_prompts(std::vector<std::vector<double>>(n, v));
}

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() /
              ("sharediff-" + tag + "-" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace sharediff::testing
