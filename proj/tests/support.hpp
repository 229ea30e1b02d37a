#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "expbert/core_data.hpp"
#include "expbert/rng.hpp"

namespace test {

// Fresh directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("expbert-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary | std::ios::trunc) << content;
}

inline expbert::Instance make_instance(std::string id, const std::string& sentence, std::size_t a, std::size_t b,
                                       std::optional<int> gold = std::nullopt) {
  expbert::Instance inst;
  inst.id = std::move(id);
  std::size_t i = 0;
  while (i < sentence.size()) {
    while (i < sentence.size() && sentence[i] == ' ') ++i;
    const auto start = i;
    while (i < sentence.size() && sentence[i] != ' ') ++i;
    if (i > start) inst.tokens.push_back(sentence.substr(start, i - start));
  }
  inst.span1 = {a, a};
  inst.span2 = {b, b};
  inst.gold = gold;
  return inst;
}

inline expbert::LabelSpace binary_labels() {
  return expbert::LabelSpace({{"no_relation", "{o1} and {o2} are unrelated"}, {"spouse", "{o1} is married to {o2}"}});
}

// A tiny well-formed dataset: n instances per split.
inline expbert::Dataset tiny_dataset(std::size_t n, std::uint64_t seed = 1) {
  expbert::Dataset d;
  d.name = "tiny";
  d.label_space = binary_labels();
  const char* words[] = {"Ann", "Bob", "met", "married", "the", "in", "Paris", "and", "saw", "wife"};
  expbert::Rng rng(seed);
  std::size_t serial = 0;
  for (auto split : expbert::kAllSplits) {
    for (std::size_t i = 0; i < n; ++i) {
      expbert::Instance inst;
      inst.id = std::string(expbert::split_name(split)) + "-" + std::to_string(serial++);
      const std::size_t len = 4 + static_cast<std::size_t>(rng.below(4));
      for (std::size_t t = 0; t < len; ++t) inst.tokens.emplace_back(words[rng.below(10)]);
      inst.span1 = {0, 0};
      inst.span2 = {len - 1, len - 1};
      inst.gold = static_cast<int>(rng.below(2));
      d.split(split).push_back(std::move(inst));
    }
  }
  return d;
}

}  // namespace test
