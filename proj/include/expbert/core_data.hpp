#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace expbert {

// Inclusive token-index interval [first, last].
struct TokenSpan {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t size() const { return last - first + 1; }
  bool operator==(const TokenSpan&) const = default;
};

// A relation-extraction input: a tokenized sentence with two entity mentions.
struct Instance {
  std::string id;
  std::vector<std::string> tokens;
  TokenSpan span1;
  TokenSpan span2;
  std::optional<int> gold;

  bool operator==(const Instance&) const = default;
};

// Throws DataError if spans are empty, out of bounds or identical.
void validate_instance(const Instance& instance);

struct Label {
  int id = 0;
  std::string name;
  std::string description;

  bool operator==(const Label&) const = default;
};

// Ordered label set with a textual description per label. Label ids are the
// dense positions 0..size()-1.
class LabelSpace {
 public:
  LabelSpace() = default;
  // Takes (name, description) pairs in order; ids are assigned densely.
  explicit LabelSpace(std::vector<std::pair<std::string, std::string>> named);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::vector<Label>& labels() const { return labels_; }
  const Label& at(std::size_t id) const { return labels_.at(id); }
  std::optional<int> index_of(std::string_view name) const;
  // Index of the label whose name normalizes to "no_relation", if any.
  std::optional<int> no_relation_index() const { return no_relation_; }

  bool operator==(const LabelSpace&) const = default;

 private:
  std::vector<Label> labels_;
  std::optional<int> no_relation_;
};

// A global explanation: a template with {o1}/{o2} placeholders and a group tag.
struct Explanation {
  std::string id;
  std::string template_text;
  std::string group;

  bool operator==(const Explanation&) const = default;
};

// Throws DataError when a template is empty or contains a brace that is not
// part of a literal "{o1}" or "{o2}".
void validate_template(std::string_view template_text);

enum class Split { kTrain, kVal, kTest };

inline constexpr Split kAllSplits[] = {Split::kTrain, Split::kVal, Split::kTest};

std::string_view split_name(Split split);

struct Dataset {
  std::string name;
  std::vector<Instance> train;
  std::vector<Instance> val;
  std::vector<Instance> test;
  LabelSpace label_space;

  const std::vector<Instance>& split(Split s) const;
  std::vector<Instance>& split(Split s);
  std::size_t size() const { return train.size() + val.size() + test.size(); }

  bool operator==(const Dataset&) const = default;
};

enum class DatasetFormat { kJsonl, kTsv };

DatasetFormat parse_dataset_format(std::string_view name);
std::string_view format_extension(DatasetFormat format);

// Label-space file: one {"name", "description"} JSON record per line.
LabelSpace load_label_space(const std::filesystem::path& path);
void write_label_space(const LabelSpace& labels, const std::filesystem::path& path);

// Loads a dataset directory holding labels.jsonl plus train/val/test files in
// the given format. Every row is validated; errors name the file and line.
Dataset load_dataset(const std::filesystem::path& dir, DatasetFormat format);
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, DatasetFormat format);

// Explanation file: one {"id", "template", "group"} JSON record per line.
// File order is preserved.
std::vector<Explanation> load_explanations(const std::filesystem::path& path);
void write_explanations(std::span<const Explanation> explanations,
                        const std::filesystem::path& path);

// Positions kept by subsample_split, in ascending order. The selection for a
// smaller fraction is always a subset of the selection for a larger one
// under the same seed.
std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed);

// Reduces the training split to floor(fraction * N) instances; val/test are
// untouched.
Dataset subsample_split(const Dataset& dataset, double fraction, std::uint64_t seed);

// Sorted set of distinct tokens in a split.
std::vector<std::string> split_vocabulary(const std::vector<Instance>& instances);

}  // namespace expbert
