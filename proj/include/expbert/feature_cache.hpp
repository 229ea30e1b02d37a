#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "expbert/matrix.hpp"

namespace expbert {

struct CacheKey {
  std::string instance_id;
  std::string text_hash;

  bool operator==(const CacheKey&) const = default;
};

struct CacheEntry {
  CacheKey key;
  std::vector<float> values;
};

// Binary feature matrix with a JSON-lines sidecar index.
//
//   <path>              "EXPF" | version u32 | dim u32 | rows u64 | rows*dim float32
//   <path>.index.jsonl  {"instance_id": ..., "text_hash": ..., "row": n} per row
//
// All integers and floats are little-endian. A row counts as committed only
// when it is present in the data file, covered by the header row count and
// listed in the index; anything beyond that is discarded on reopen.
class FeatureCache {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 20;

  // Reads a complete cache. Throws DataError if missing or corrupt.
  static FeatureCache load(const std::filesystem::path& path);

  // Creates a new cache, or reopens an existing one of the same dim and
  // truncates any uncommitted tail so appends resume cleanly.
  static FeatureCache open_for_append(const std::filesystem::path& path, std::size_t dim);

  static std::filesystem::path index_path(const std::filesystem::path& path);

  const std::filesystem::path& path() const { return path_; }
  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return keys_.size(); }
  const std::vector<CacheKey>& keys() const { return keys_; }

  std::optional<std::size_t> find(std::string_view instance_id, std::string_view text_hash) const;
  std::span<const float> row(std::size_t index) const { return {data_.data() + index * dim_, dim_}; }

  // Writes and commits the entries. Keys must be new and values must have dim() floats.
  void append(std::span<const CacheEntry> entries);

 private:
  FeatureCache() = default;
  static std::string lookup_key(std::string_view instance_id, std::string_view text_hash);

  std::filesystem::path path_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<CacheKey> keys_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

// Writes a matrix as a fresh cache, one row per key (text_hash = tag).
void write_matrix_cache(const std::filesystem::path& path, const Matrix& matrix,
                        std::span<const std::string> row_ids, std::string_view tag);

// Reads every row of a cache into a matrix, in row order.
Matrix read_matrix_cache(const std::filesystem::path& path);

}  // namespace expbert
