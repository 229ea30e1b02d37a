#include "expbert/feature_cache.hpp"

#include <array>
#include <bit>
#include <fstream>

#include <json.hpp>

#include "expbert/error.hpp"

namespace expbert {
namespace {

constexpr std::array<char, 4> kMagic = {'E', 'X', 'P', 'F'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xffU));
  }
}

template <typename U>
U get_le(const unsigned char* bytes) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

std::string encode_header(std::size_t dim, std::size_t rows) {
  std::string out(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, FeatureCache::kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(rows));
  return out;
}

std::string encode_rows(std::span<const CacheEntry> entries) {
  std::string out;
  for (const auto& entry : entries) {
    for (float f : entry.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

struct RawCache {
  std::size_t dim = 0;
  std::size_t header_rows = 0;
  std::vector<float> data;  // complete rows present in the file, up to header_rows
  std::vector<CacheKey> index;
};

RawCache read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing feature cache: " + path.string());
  std::array<unsigned char, FeatureCache::kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size()) ||
      !std::equal(kMagic.begin(), kMagic.end(), reinterpret_cast<const char*>(header.data()))) {
    throw DataError("not a feature cache (bad magic): " + path.string());
  }
  const auto version = get_le<std::uint32_t>(header.data() + 4);
  if (version != FeatureCache::kVersion) {
    throw DataError("unsupported feature cache version " + std::to_string(version) + ": " + path.string());
  }
  RawCache raw;
  raw.dim = get_le<std::uint32_t>(header.data() + 8);
  raw.header_rows = static_cast<std::size_t>(get_le<std::uint64_t>(header.data() + 12));
  if (raw.dim == 0) throw DataError("feature cache with zero dim: " + path.string());

  const auto file_bytes = std::filesystem::file_size(path) - FeatureCache::kHeaderBytes;
  const auto row_bytes = raw.dim * sizeof(float);
  const auto present = std::min<std::size_t>(raw.header_rows, file_bytes / row_bytes);
  std::vector<unsigned char> bytes(present * row_bytes);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  raw.data.resize(present * raw.dim);
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    raw.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + 4 * i));
  }

  std::ifstream index_in(FeatureCache::index_path(path));
  std::string line;
  std::size_t number = 0;
  while (std::getline(index_in, line)) {
    ++number;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
      const auto row = record.at("row").get<std::size_t>();
      if (row != raw.index.size()) {
        throw DataError("index row " + std::to_string(row) + " out of sequence");
      }
      raw.index.push_back({record.at("instance_id").get<std::string>(), record.at("text_hash").get<std::string>()});
    } catch (const nlohmann::json::exception&) {
      // A torn final line is an uncommitted append; anything earlier is corruption.
      if (index_in.peek() == std::char_traits<char>::eof()) break;
      throw DataError(FeatureCache::index_path(path).string() + ":" + std::to_string(number) + ": malformed index entry");
    }
  }
  return raw;
}

}  // namespace

std::filesystem::path FeatureCache::index_path(const std::filesystem::path& path) {
  auto out = path;
  out += ".index.jsonl";
  return out;
}

std::string FeatureCache::lookup_key(std::string_view instance_id, std::string_view text_hash) {
  std::string key(instance_id);
  key.push_back('\x1f');
  key += text_hash;
  return key;
}

FeatureCache FeatureCache::load(const std::filesystem::path& path) {
  auto raw = read_raw(path);
  FeatureCache cache;
  cache.path_ = path;
  cache.dim_ = raw.dim;
  const auto committed = std::min(raw.data.size() / raw.dim, raw.index.size());
  raw.data.resize(committed * raw.dim);
  raw.index.resize(committed);
  cache.data_ = std::move(raw.data);
  for (auto& key : raw.index) {
    if (!cache.lookup_.emplace(lookup_key(key.instance_id, key.text_hash), cache.keys_.size()).second) {
      throw DataError("duplicate key (" + key.instance_id + ", " + key.text_hash + ") in " + path.string());
    }
    cache.keys_.push_back(std::move(key));
  }
  return cache;
}

FeatureCache FeatureCache::open_for_append(const std::filesystem::path& path, std::size_t dim) {
  if (dim == 0) throw DataError("feature cache dim must be positive");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!std::filesystem::exists(path)) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const auto header = encode_header(dim, 0);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    std::ofstream(index_path(path), std::ios::trunc);
    if (!out) throw DataError("cannot create feature cache " + path.string());
    FeatureCache cache;
    cache.path_ = path;
    cache.dim_ = dim;
    return cache;
  }

  auto cache = load(path);
  if (cache.dim_ != dim) {
    throw DataError("feature cache " + path.string() + " has dim " + std::to_string(cache.dim_) +
                    ", expected " + std::to_string(dim));
  }
  // Drop the uncommitted tail and rewrite header and index to match.
  std::filesystem::resize_file(path, kHeaderBytes + cache.rows() * dim * sizeof(float));
  {
    std::fstream out(path, std::ios::binary | std::ios::in | std::ios::out);
    const auto header = encode_header(dim, cache.rows());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
  }
  std::ofstream index(index_path(path), std::ios::trunc);
  for (std::size_t i = 0; i < cache.keys_.size(); ++i) {
    index << nlohmann::json{{"instance_id", cache.keys_[i].instance_id},
                            {"text_hash", cache.keys_[i].text_hash},
                            {"row", i}}
                 .dump()
          << '\n';
  }
  return cache;
}

std::optional<std::size_t> FeatureCache::find(std::string_view instance_id, std::string_view text_hash) const {
  auto it = lookup_.find(lookup_key(instance_id, text_hash));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

void FeatureCache::append(std::span<const CacheEntry> entries) {
  if (entries.empty()) return;
  for (const auto& entry : entries) {
    if (entry.values.size() != dim_) {
      throw DataError("feature row for " + entry.key.instance_id + " has " + std::to_string(entry.values.size()) +
                      " values, cache dim is " + std::to_string(dim_));
    }
    if (find(entry.key.instance_id, entry.key.text_hash)) {
      throw DataError("duplicate cache key (" + entry.key.instance_id + ", " + entry.key.text_hash + ")");
    }
  }
  const std::size_t first_row = rows();
  const std::size_t new_rows = first_row + entries.size();
  {
    std::fstream out(path_, std::ios::binary | std::ios::in | std::ios::out);
    if (!out) throw DataError("cannot open feature cache for writing: " + path_.string());
    const auto payload = encode_rows(entries);
    out.seekp(static_cast<std::streamoff>(kHeaderBytes + first_row * dim_ * sizeof(float)));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    out.flush();
    const auto header = encode_header(dim_, new_rows);
    out.seekp(0);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.flush();
    if (!out) throw DataError("write failed for feature cache " + path_.string());
  }
  {
    std::ofstream index(index_path(path_), std::ios::app);
    std::string lines;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      lines += nlohmann::json{{"instance_id", entries[i].key.instance_id},
                              {"text_hash", entries[i].key.text_hash},
                              {"row", first_row + i}}
                   .dump();
      lines.push_back('\n');
    }
    index << lines;
    index.flush();
    if (!index) throw DataError("write failed for feature cache index " + index_path(path_).string());
  }
  for (const auto& entry : entries) {
    lookup_.emplace(lookup_key(entry.key.instance_id, entry.key.text_hash), keys_.size());
    keys_.push_back(entry.key);
    data_.insert(data_.end(), entry.values.begin(), entry.values.end());
  }
}

void write_matrix_cache(const std::filesystem::path& path, const Matrix& matrix,
                        std::span<const std::string> row_ids, std::string_view tag) {
  if (row_ids.size() != matrix.rows) throw DataError("row id count does not match matrix rows");
  std::filesystem::remove(path);
  std::filesystem::remove(FeatureCache::index_path(path));
  auto cache = FeatureCache::open_for_append(path, matrix.cols);
  std::vector<CacheEntry> entries;
  entries.reserve(matrix.rows);
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    const auto row = matrix.row(r);
    entries.push_back({{row_ids[r], std::string(tag)}, {row.begin(), row.end()}});
  }
  cache.append(entries);
}

Matrix read_matrix_cache(const std::filesystem::path& path) {
  const auto cache = FeatureCache::load(path);
  Matrix out(cache.rows(), cache.dim());
  for (std::size_t r = 0; r < cache.rows(); ++r) {
    const auto row = cache.row(r);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace expbert
