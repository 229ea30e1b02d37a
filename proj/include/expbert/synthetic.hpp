#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "expbert/core_data.hpp"

namespace expbert {

// Binary corpus whose gold labels follow a linear rule over hash-interpreter
// features: an instance is positive iff the first component of its
// explanation vectors sums above `threshold`. Instances within `margin` of
// the threshold are rejected, so the rule separates the splits with room to
// spare.
struct PlantedOptions {
  std::size_t train = 500;
  std::size_t val = 200;
  std::size_t test = 200;
  std::size_t explanations = 4;
  std::size_t dim = 8;                   // hash-interpreter width the rule is planted for
  std::uint64_t interpreter_seed = 0;    // hash-interpreter seed the rule is planted for
  std::uint64_t corpus_seed = 7;
  double threshold = 0.5;
  double margin = 0.25;
  std::size_t min_tokens = 6;
  std::size_t max_tokens = 14;
};

struct PlantedCorpus {
  Dataset dataset;
  std::vector<Explanation> explanations;
};

PlantedCorpus make_planted_corpus(const PlantedOptions& options);

// Score the label rule thresholds.
double planted_score(const Instance& instance, const std::vector<Explanation>& explanations,
                     const PlantedOptions& options);

// Writes dataset/, explanations.jsonl and a hash-interpreter config.json
// (small grid, 5 seeds) under dir. Returns the config path.
std::filesystem::path write_planted_fixture(const PlantedOptions& options, const std::filesystem::path& dir);

}  // namespace expbert
