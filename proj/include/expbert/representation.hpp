#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "expbert/core_data.hpp"
#include "expbert/interpreters.hpp"
#include "expbert/matrix.hpp"

namespace expbert {

// One contiguous slice of a representation and the text it came from.
struct Block {
  std::string source_id;
  std::size_t offset = 0;
  std::size_t length = 0;

  bool operator==(const Block&) const = default;
};

struct BlockVector {
  std::vector<float> values;
  std::vector<Block> blocks;
};

// Source lists in the order their blocks appear.
std::vector<TextSource> label_sources(const LabelSpace& labels);            // ids "label:<name>"
std::vector<TextSource> explanation_sources(std::span<const Explanation> explanations);  // explanation ids
std::vector<TextSource> pattern_sources(const PatternSet& patterns);        // ids "pattern:<ngram>"
std::vector<TextSource> dictionary_sources(std::span<const std::string> names);  // ids "ontology:<name>"

// Instantiates each source against the instance, interprets it and
// concatenates the outputs. Throws DataError if an output is not dim() wide.
BlockVector interpret_sources(const Instance& instance, std::span<const TextSource> sources,
                              const Interpreter& interpreter);

// Input representation: one block per label description, in label order.
BlockVector build_u(const Instance& instance, const LabelSpace& labels, const Interpreter& interpreter);

// Explanation representation: one block per explanation, in file order.
BlockVector build_v(const Instance& instance, std::span<const Explanation> explanations,
                    const Interpreter& interpreter);

struct AssembledRepresentation {
  std::vector<float> values;
  std::vector<Block> layout;
  std::size_t u_length = 0;
  std::size_t v_length = 0;
  std::size_t extras_length = 0;

  std::size_t size() const { return values.size(); }
};

// [u, v, extras] with offsets shifted into one layout. u must be non-empty.
AssembledRepresentation assemble(const BlockVector& u, const BlockVector& v, const BlockVector* extras = nullptr);

// Throws DataError unless blocks are contiguous from 0 and cover exactly `total` values.
void check_layout(std::span<const Block> layout, std::size_t total);

// Removes the named blocks and re-packs the rest.
AssembledRepresentation drop_sources(const AssembledRepresentation& rep, std::span<const std::string> source_ids);

// Zeroes the named blocks in place of removing them.
AssembledRepresentation mask_sources(const AssembledRepresentation& rep, std::span<const std::string> source_ids);

// How to build one classifier row per instance.
struct FeaturePlan {
  std::vector<TextSource> u_sources;
  const Interpreter* u_interpreter = nullptr;
  std::vector<TextSource> v_sources;
  const Interpreter* v_interpreter = nullptr;
  std::vector<TextSource> extra_sources;
  const Interpreter* extra_interpreter = nullptr;
};

struct FeatureMatrix {
  Matrix x;
  std::vector<int> labels;  // -1 where the instance has no gold label
  std::vector<std::string> ids;
  std::vector<Block> layout;
};

// Layout every instance's representation will have under the plan.
std::vector<Block> plan_layout(const FeaturePlan& plan);

AssembledRepresentation build_representation(const FeaturePlan& plan, const Instance& instance);

FeatureMatrix build_feature_matrix(const FeaturePlan& plan, const std::vector<Instance>& instances);

}  // namespace expbert
