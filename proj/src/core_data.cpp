#include "expbert/core_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>
#include <utility>

#include <json.hpp>

#include "expbert/error.hpp"
#include "expbert/rng.hpp"

namespace expbert {
namespace {

using nlohmann::json;

std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.filename().string() + ":" + std::to_string(line) + ": ";
}

std::string normalize_label_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (c == '-' || c == ' ') {
      out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw DataError("missing file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

// Calls fn(line_number, line) for every non-blank line.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(number, line);
  }
}

json parse_record(const std::filesystem::path& path, std::size_t number, const std::string& line) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(location(path, number) + "invalid JSON: " + e.what());
  }
  if (!record.is_object()) throw DataError(location(path, number) + "expected a JSON object");
  return record;
}

template <typename T>
T required(const json& record, const char* key, const std::string& where) {
  auto it = record.find(key);
  if (it == record.end()) throw DataError(where + "missing field \"" + key + "\"");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw DataError(where + "field \"" + key + "\" has the wrong type");
  }
}

TokenSpan span_from_json(const json& value, const std::string& where, const char* key) {
  if (!value.is_array() || value.size() != 2 || !value[0].is_number_integer() ||
      !value[1].is_number_integer()) {
    throw DataError(where + "field \"" + key + "\" must be [first, last]");
  }
  const auto first = value[0].get<long long>();
  const auto last = value[1].get<long long>();
  if (first < 0 || last < 0) throw DataError(where + "negative index in \"" + key + "\"");
  return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
}

void check_instance(const Instance& instance, const std::string& where) {
  try {
    validate_instance(instance);
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  }
}

Instance parse_jsonl_instance(const json& record, const LabelSpace& labels, const std::string& where) {
  Instance instance;
  instance.id = required<std::string>(record, "id", where);
  instance.tokens = required<std::vector<std::string>>(record, "tokens", where);
  if (!record.contains("span1") || !record.contains("span2")) {
    throw DataError(where + "missing span field");
  }
  instance.span1 = span_from_json(record["span1"], where, "span1");
  instance.span2 = span_from_json(record["span2"], where, "span2");
  if (auto it = record.find("label"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError(where + "field \"label\" must be a string or null");
    const auto name = it->get<std::string>();
    const auto index = labels.index_of(name);
    if (!index) throw DataError(where + "unknown label \"" + name + "\"");
    instance.gold = *index;
  }
  check_instance(instance, where);
  return instance;
}

std::vector<std::string> split_on(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      return parts;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

TokenSpan parse_tsv_span(const std::string& field, const std::string& where) {
  const auto parts = split_on(field, ',');
  if (parts.size() != 2) throw DataError(where + "span must be \"first,last\": " + field);
  try {
    std::size_t used = 0;
    const long long first = std::stoll(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument(parts[0]);
    const long long last = std::stoll(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument(parts[1]);
    if (first < 0 || last < 0) throw std::invalid_argument(field);
    return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
  } catch (const std::logic_error&) {
    throw DataError(where + "bad span \"" + field + "\"");
  }
}

Instance parse_tsv_instance(const std::string& line, const LabelSpace& labels, const std::string& where) {
  const auto fields = split_on(line, '\t');
  if (fields.size() != 5) {
    throw DataError(where + "expected 5 tab-separated fields, got " + std::to_string(fields.size()));
  }
  Instance instance;
  instance.id = fields[0];
  if (instance.id.empty()) throw DataError(where + "empty id");
  for (auto& token : split_on(fields[1], ' ')) {
    if (!token.empty()) instance.tokens.push_back(std::move(token));
  }
  instance.span1 = parse_tsv_span(fields[2], where);
  instance.span2 = parse_tsv_span(fields[3], where);
  if (!fields[4].empty()) {
    const auto index = labels.index_of(fields[4]);
    if (!index) throw DataError(where + "unknown label \"" + fields[4] + "\"");
    instance.gold = *index;
  }
  check_instance(instance, where);
  return instance;
}

std::vector<Instance> load_split(const std::filesystem::path& path, DatasetFormat format,
                                 const LabelSpace& labels) {
  std::vector<Instance> instances;
  std::unordered_set<std::string> seen;
  for_each_line(path, [&](std::size_t number, const std::string& line) {
    const auto where = location(path, number);
    Instance instance = format == DatasetFormat::kJsonl
                            ? parse_jsonl_instance(parse_record(path, number, line), labels, where)
                            : parse_tsv_instance(line, labels, where);
    if (!seen.insert(instance.id).second) {
      throw DataError(where + "duplicate id \"" + instance.id + "\"");
    }
    instances.push_back(std::move(instance));
  });
  return instances;
}

void write_split(const std::vector<Instance>& instances, const LabelSpace& labels,
                 const std::filesystem::path& path, DatasetFormat format) {
  auto out = open_output(path);
  for (const auto& instance : instances) {
    if (format == DatasetFormat::kJsonl) {
      json record = {{"id", instance.id},
                     {"tokens", instance.tokens},
                     {"span1", {instance.span1.first, instance.span1.last}},
                     {"span2", {instance.span2.first, instance.span2.last}},
                     {"label", nullptr}};
      if (instance.gold) record["label"] = labels.at(*instance.gold).name;
      out << record.dump() << '\n';
      continue;
    }
    auto bad = [](const std::string& s) { return s.find_first_of("\t\n ") != std::string::npos; };
    if (bad(instance.id) || std::any_of(instance.tokens.begin(), instance.tokens.end(), bad)) {
      throw DataError("instance \"" + instance.id + "\" cannot be written as TSV (whitespace in field)");
    }
    out << instance.id << '\t';
    for (std::size_t i = 0; i < instance.tokens.size(); ++i) {
      out << (i ? " " : "") << instance.tokens[i];
    }
    out << '\t' << instance.span1.first << ',' << instance.span1.last << '\t' << instance.span2.first
        << ',' << instance.span2.last << '\t';
    if (instance.gold) out << labels.at(*instance.gold).name;
    out << '\n';
  }
}

}  // namespace

void validate_instance(const Instance& instance) {
  if (instance.id.empty()) throw DataError("empty instance id");
  const auto n = instance.tokens.size();
  for (const auto* span : {&instance.span1, &instance.span2}) {
    if (span->first > span->last) throw DataError("empty span in \"" + instance.id + "\"");
    if (span->last >= n) {
      throw DataError("span [" + std::to_string(span->first) + "," + std::to_string(span->last) +
                      "] out of bounds for " + std::to_string(n) + " tokens in \"" + instance.id + "\"");
    }
  }
  if (instance.span1 == instance.span2) {
    throw DataError("span1 and span2 are identical in \"" + instance.id + "\"");
  }
}

LabelSpace::LabelSpace(std::vector<std::pair<std::string, std::string>> named) {
  std::set<std::string> names;
  for (auto& [name, description] : named) {
    if (name.empty()) throw DataError("empty label name");
    if (description.empty()) throw DataError("label \"" + name + "\" has no description");
    if (!names.insert(name).second) throw DataError("duplicate label \"" + name + "\"");
    const int id = static_cast<int>(labels_.size());
    if (normalize_label_name(name) == "no_relation") {
      if (no_relation_) throw DataError("more than one no_relation label");
      no_relation_ = id;
    }
    labels_.push_back({id, std::move(name), std::move(description)});
  }
}

std::optional<int> LabelSpace::index_of(std::string_view name) const {
  for (const auto& label : labels_) {
    if (label.name == name) return label.id;
  }
  return std::nullopt;
}

void validate_template(std::string_view text) {
  if (text.empty()) throw DataError("empty template");
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '{') {
      const auto token = text.substr(i, 4);
      if (token != "{o1}" && token != "{o2}") {
        const auto end = text.find('}', i);
        throw DataError("malformed placeholder \"" +
                        std::string(text.substr(i, end == std::string_view::npos ? 4 : end - i + 1)) +
                        "\" in template \"" + std::string(text) + "\"");
      }
      i += 3;
    } else if (text[i] == '}') {
      throw DataError("stray '}' in template \"" + std::string(text) + "\"");
    }
  }
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

const std::vector<Instance>& Dataset::split(Split s) const {
  switch (s) {
    case Split::kTrain:
      return train;
    case Split::kVal:
      return val;
    case Split::kTest:
      break;
  }
  return test;
}

std::vector<Instance>& Dataset::split(Split s) {
  return const_cast<std::vector<Instance>&>(std::as_const(*this).split(s));
}

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "jsonl") return DatasetFormat::kJsonl;
  if (name == "tsv") return DatasetFormat::kTsv;
  throw ConfigError("unknown dataset format \"" + std::string(name) + "\" (expected jsonl or tsv)");
}

std::string_view format_extension(DatasetFormat format) {
  return format == DatasetFormat::kJsonl ? ".jsonl" : ".tsv";
}

LabelSpace load_label_space(const std::filesystem::path& path) {
  std::vector<std::pair<std::string, std::string>> named;
  for_each_line(path, [&](std::size_t number, const std::string& line) {
    const auto record = parse_record(path, number, line);
    const auto where = location(path, number);
    named.emplace_back(required<std::string>(record, "name", where),
                       required<std::string>(record, "description", where));
  });
  try {
    return LabelSpace(std::move(named));
  } catch (const DataError& e) {
    throw DataError(path.filename().string() + ": " + e.what());
  }
}

void write_label_space(const LabelSpace& labels, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& label : labels.labels()) {
    out << json{{"name", label.name}, {"description", label.description}}.dump() << '\n';
  }
}

Dataset load_dataset(const std::filesystem::path& dir, DatasetFormat format) {
  if (!std::filesystem::is_directory(dir)) throw DataError("missing dataset directory: " + dir.string());
  Dataset dataset;
  dataset.name = std::filesystem::absolute(dir).lexically_normal().filename().string();
  if (dataset.name.empty()) dataset.name = std::filesystem::absolute(dir).parent_path().filename().string();
  dataset.label_space = load_label_space(dir / "labels.jsonl");
  std::unordered_set<std::string> ids;
  for (Split split : kAllSplits) {
    const auto path = dir / (std::string(split_name(split)) + std::string(format_extension(format)));
    dataset.split(split) = load_split(path, format, dataset.label_space);
    for (const auto& instance : dataset.split(split)) {
      if (!ids.insert(instance.id).second) {
        throw DataError(path.filename().string() + ": id \"" + instance.id +
                        "\" already appears in another split");
      }
    }
  }
  return dataset;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, DatasetFormat format) {
  std::filesystem::create_directories(dir);
  write_label_space(dataset.label_space, dir / "labels.jsonl");
  for (Split split : kAllSplits) {
    write_split(dataset.split(split), dataset.label_space,
                dir / (std::string(split_name(split)) + std::string(format_extension(format))), format);
  }
}

std::vector<Explanation> load_explanations(const std::filesystem::path& path) {
  std::vector<Explanation> explanations;
  std::unordered_set<std::string> ids;
  for_each_line(path, [&](std::size_t number, const std::string& line) {
    const auto record = parse_record(path, number, line);
    const auto where = location(path, number);
    Explanation e{required<std::string>(record, "id", where),
                  required<std::string>(record, "template", where),
                  required<std::string>(record, "group", where)};
    try {
      validate_template(e.template_text);
    } catch (const DataError& err) {
      throw DataError(where + err.what());
    }
    if (!ids.insert(e.id).second) throw DataError(where + "duplicate explanation id \"" + e.id + "\"");
    explanations.push_back(std::move(e));
  });
  return explanations;
}

void write_explanations(std::span<const Explanation> explanations, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& e : explanations) {
    out << json{{"id", e.id}, {"template", e.template_text}, {"group", e.group}}.dump() << '\n';
  }
}

std::vector<std::size_t> subsample_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw ConfigError("fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  // A single seeded permutation; every fraction takes a prefix of it.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5ab5));
  rng.shuffle(order);
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  const auto keep = std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)));
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

Dataset subsample_split(const Dataset& dataset, double fraction, std::uint64_t seed) {
  Dataset out = dataset;
  out.train.clear();
  for (auto index : subsample_indices(dataset.train.size(), fraction, seed)) {
    out.train.push_back(dataset.train[index]);
  }
  return out;
}

std::vector<std::string> split_vocabulary(const std::vector<Instance>& instances) {
  std::set<std::string> vocab;
  for (const auto& instance : instances) vocab.insert(instance.tokens.begin(), instance.tokens.end());
  return {vocab.begin(), vocab.end()};
}

}  // namespace expbert
