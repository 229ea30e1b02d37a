#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "expbert/core_data.hpp"
#include "expbert/representation.hpp"

namespace expbert {

enum class AblationMode { kGroupCumulative, kRandomOnly, kOrigPlusRandom, kOntology };

std::string_view ablation_mode_name(AblationMode mode);
AblationMode parse_ablation_mode(std::string_view name);

inline constexpr std::string_view kRandomGroup = "random";

struct AblationPlan {
  AblationMode mode = AblationMode::kGroupCumulative;
  std::vector<std::string> group_order;  // group_cumulative only
  std::uint64_t random_seed = 0;
  std::string vocabulary = "train";      // "train" or a path to a one-token-per-line file
  std::size_t k_random = 10;             // orig_plus_random only
  std::size_t runs = 5;

  bool operator==(const AblationPlan&) const = default;
};

// Throws ConfigError if runs is 0 or the group order names a group that no
// explanation carries.
void validate(const AblationPlan& plan, std::span<const Explanation> explanations);

// Subset k holds the groups order[0..k-1] (subset 0 is empty), in file order.
// Returns order.size() + 1 nested subsets.
std::vector<std::vector<Explanation>> cumulative_groups(std::span<const Explanation> explanations,
                                                        std::span<const std::string> order);

// Replaces every word outside the placeholders with a uniform draw from the
// vocabulary. Placeholders and whitespace stay where they were. Ids become
// "random-<i>" and groups "random".
std::vector<Explanation> randomize_explanations(std::span<const Explanation> explanations,
                                                std::span<const std::string> vocabulary, std::uint64_t seed);

// The originals followed by k randomized explanations built from originals
// picked in seeded order (cycling when k exceeds the count).
std::vector<Explanation> combine_orig_random(std::span<const Explanation> original, std::size_t k_random,
                                             std::span<const std::string> vocabulary, std::uint64_t seed);

// Default random vocabulary: distinct training tokens that cannot be mistaken
// for placeholder syntax.
std::vector<std::string> default_random_vocabulary(const Dataset& dataset);

// Removes the named blocks' columns from a feature matrix and re-packs the layout.
FeatureMatrix drop_blocks(const FeatureMatrix& matrix, std::span<const std::string> source_ids);

}  // namespace expbert
