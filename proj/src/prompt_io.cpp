#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "sharediff/embedding.hpp"
#include "sharediff/errors.hpp"
#include "sharediff/io_util.hpp"

namespace sharediff {
namespace {

// Parses numbers straight to f32 so that shortest-form f32 text round-trips.
using JsonF32 = nlohmann::basic_json<std::map, std::vector, std::string, bool, std::int64_t,
                                     std::uint64_t, float>;

constexpr std::array<char, 4> kMagic = {'S', 'H', 'D', 'F'};
constexpr std::uint16_t kBinaryVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 2 + 8 + 4;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

Embedding ingest(Embedding e, const LoadOptions& options) {
  if (options.normalize) e = e.normalized();
  return e.rounded_to_f32();
}

PromptSet load_jsonl(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<PromptRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    JsonF32 j;
    try {
      j = JsonF32::parse(line);
    } catch (const std::exception& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
      throw DataError(where + ": record needs a string \"id\"");
    }
    PromptRecord rec;
    rec.id = j["id"].get<std::string>();
    const std::string named = where + " (id '" + rec.id + "')";
    if (j.contains("prompt") && !j["prompt"].is_null()) {
      if (!j["prompt"].is_string()) throw DataError(named + ": \"prompt\" must be a string");
      rec.prompt = j["prompt"].get<std::string>();
    }
    if (!j.contains("embedding") || !j["embedding"].is_array() || j["embedding"].empty()) {
      throw DataError(named + ": \"embedding\" must be a non-empty array");
    }
    std::vector<float> values;
    values.reserve(j["embedding"].size());
    for (const auto& v : j["embedding"]) {
      if (!v.is_number()) throw DataError(named + ": non-numeric embedding entry");
      values.push_back(v.get<float>());
    }
    try {
      rec.embedding = ingest(Embedding::from_f32(values), options);
    } catch (const std::exception& e) {
      throw DataError(named + ": " + e.what());
    }
    if (!records.empty() && rec.embedding.dimension() != records.front().embedding.dimension()) {
      throw DataError(named + ": dimension " + std::to_string(rec.embedding.dimension()) +
                      ", expected " + std::to_string(records.front().embedding.dimension()));
    }
    if (!seen.insert(rec.id).second) {
      throw DataError(named + ": duplicate id '" + rec.id + "'");
    }
    records.push_back(std::move(rec));
  }
  return PromptSet(std::move(records));
}

PromptSet load_binary(const std::filesystem::path& path, const LoadOptions& options) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kHeaderBytes || std::memcmp(p, kMagic.data(), 4) != 0) {
    throw DataError(path.string() + ": missing SHDF header");
  }
  const auto version = get_le<std::uint16_t>(p + 4);
  if (version != kBinaryVersion) {
    throw DataError(path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto n = get_le<std::uint64_t>(p + 6);
  const auto d = get_le<std::uint32_t>(p + 14);
  if (d == 0) throw DataError(path.string() + ": dimension is zero");
  const std::uint64_t payload = bytes.size() - kHeaderBytes;
  if (n > payload / 4 / d || payload != n * d * 4) {
    throw DataError(path.string() + ": header declares N=" + std::to_string(n) +
                    ", d=" + std::to_string(d) + " but payload holds " +
                    std::to_string(payload) + " bytes");
  }
  std::vector<PromptRecord> records;
  records.reserve(n);
  std::vector<float> row(d);
  for (std::uint64_t i = 0; i < n; ++i) {
    const unsigned char* base = p + kHeaderBytes + i * d * 4;
    for (std::uint32_t j = 0; j < d; ++j) {
      const auto bits = get_le<std::uint32_t>(base + 4 * j);
      std::memcpy(&row[j], &bits, 4);
    }
    PromptRecord rec;
    rec.id = std::to_string(i);
    try {
      rec.embedding = ingest(Embedding::from_f32(row), options);
    } catch (const std::exception& e) {
      throw DataError(path.string() + ": record " + rec.id + ": " + e.what());
    }
    records.push_back(std::move(rec));
  }
  return PromptSet(std::move(records));
}

}  // namespace

PromptFormat detect_format(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::array<char, 4> head{};
  in.read(head.data(), 4);
  return (in.gcount() == 4 && head == kMagic) ? PromptFormat::kBinary : PromptFormat::kJsonl;
}

PromptSet load_prompt_set(const std::filesystem::path& path, PromptFormat format,
                          const LoadOptions& options) {
  return format == PromptFormat::kBinary ? load_binary(path, options)
                                         : load_jsonl(path, options);
}

PromptSet load_prompt_set(const std::filesystem::path& path, const LoadOptions& options) {
  return load_prompt_set(path, detect_format(path), options);
}

void save_prompt_set(const PromptSet& prompts, const std::filesystem::path& path,
                     PromptFormat format) {
  std::string out;
  if (format == PromptFormat::kBinary) {
    const std::size_t d = prompts.dimension();
    out.reserve(kHeaderBytes + prompts.size() * d * 4);
    out.append(kMagic.data(), kMagic.size());
    put_le<std::uint16_t>(out, kBinaryVersion);
    put_le<std::uint64_t>(out, prompts.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (const auto& rec : prompts) {
      for (double v : rec.embedding.values()) {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_le<std::uint32_t>(out, bits);
      }
    }
  } else {
    for (const auto& rec : prompts) {
      out += "{\"id\":";
      out += nlohmann::json(rec.id).dump();
      if (rec.prompt) {
        out += ",\"prompt\":";
        out += nlohmann::json(*rec.prompt).dump();
      }
      out += ",\"embedding\":";
      append_f32_array(out, rec.embedding.values());
      out += "}\n";
    }
  }
  write_file_atomic(path, out);
}

}  // namespace sharediff
