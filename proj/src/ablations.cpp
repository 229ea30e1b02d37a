#include "expbert/ablations.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>
#include <unordered_set>

#include "expbert/error.hpp"
#include "expbert/rng.hpp"
#include "expbert/templating.hpp"

namespace expbert {
namespace {

bool usable_word(std::string_view w) {
  if (w.empty()) return false;
  return std::none_of(w.begin(), w.end(), [](char c) {
    return c == '{' || c == '}' || std::isspace(static_cast<unsigned char>(c));
  });
}

std::string randomize_text(std::string_view text, std::span<const std::string> vocabulary, Rng& rng) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, kPlaceholder1.size(), kPlaceholder1) == 0) {
      out += kPlaceholder1;
      i += kPlaceholder1.size();
    } else if (text.compare(i, kPlaceholder2.size(), kPlaceholder2) == 0) {
      out += kPlaceholder2;
      i += kPlaceholder2.size();
    } else if (std::isspace(static_cast<unsigned char>(text[i]))) {
      out += text[i++];
    } else {
      // A word runs until whitespace or the next placeholder.
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
             text.compare(i, kPlaceholder1.size(), kPlaceholder1) != 0 &&
             text.compare(i, kPlaceholder2.size(), kPlaceholder2) != 0) {
        ++i;
      }
      out += vocabulary[static_cast<std::size_t>(rng.below(vocabulary.size()))];
    }
  }
  return out;
}

}  // namespace

std::string_view ablation_mode_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::kGroupCumulative: return "group_cumulative";
    case AblationMode::kRandomOnly: return "random_only";
    case AblationMode::kOrigPlusRandom: return "orig_plus_random";
    case AblationMode::kOntology: return "ontology";
  }
  return "unknown";
}

AblationMode parse_ablation_mode(std::string_view name) {
  for (auto mode : {AblationMode::kGroupCumulative, AblationMode::kRandomOnly, AblationMode::kOrigPlusRandom,
                    AblationMode::kOntology}) {
    if (ablation_mode_name(mode) == name) return mode;
  }
  throw ConfigError("unknown ablation mode \"" + std::string(name) +
                    "\" (expected group_cumulative, random_only, orig_plus_random or ontology)");
}

void validate(const AblationPlan& plan, std::span<const Explanation> explanations) {
  if (plan.runs == 0) throw ConfigError("ablation runs must be >= 1");
  std::set<std::string> groups;
  for (const auto& e : explanations) groups.insert(e.group);
  std::set<std::string> seen;
  for (const auto& g : plan.group_order) {
    if (!groups.count(g)) throw ConfigError("ablation group \"" + g + "\" does not appear in the explanation file");
    if (!seen.insert(g).second) throw ConfigError("ablation group \"" + g + "\" listed twice");
  }
}

std::vector<std::vector<Explanation>> cumulative_groups(std::span<const Explanation> explanations,
                                                        std::span<const std::string> order) {
  std::set<std::string> known;
  for (const auto& e : explanations) known.insert(e.group);
  for (const auto& g : order) {
    if (!known.count(g)) throw ConfigError("unknown explanation group \"" + g + "\"");
  }
  std::vector<std::vector<Explanation>> subsets{{}};
  std::unordered_set<std::string> active;
  for (const auto& g : order) {
    active.insert(g);
    std::vector<Explanation> subset;
    for (const auto& e : explanations) {
      if (active.count(e.group)) subset.push_back(e);
    }
    subsets.push_back(std::move(subset));
  }
  return subsets;
}

std::vector<Explanation> randomize_explanations(std::span<const Explanation> explanations,
                                                std::span<const std::string> vocabulary, std::uint64_t seed) {
  if (vocabulary.empty()) throw ConfigError("random vocabulary is empty");
  for (const auto& w : vocabulary) {
    if (!usable_word(w)) throw ConfigError("random vocabulary entry \"" + w + "\" is empty or has braces or spaces");
  }
  Rng rng(seed);
  std::vector<Explanation> out;
  out.reserve(explanations.size());
  for (std::size_t i = 0; i < explanations.size(); ++i) {
    out.push_back({"random-" + std::to_string(i), randomize_text(explanations[i].template_text, vocabulary, rng),
                   std::string(kRandomGroup)});
  }
  return out;
}

std::vector<Explanation> combine_orig_random(std::span<const Explanation> original, std::size_t k_random,
                                             std::span<const std::string> vocabulary, std::uint64_t seed) {
  std::vector<Explanation> out(original.begin(), original.end());
  if (k_random == 0) return out;
  if (original.empty()) throw ConfigError("cannot build random explanations without originals");
  Rng rng(derive_seed(seed, 0));
  std::vector<std::size_t> order(original.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<Explanation> bases;
  for (std::size_t i = 0; i < k_random; ++i) bases.push_back(original[order[i % order.size()]]);
  auto randomized = randomize_explanations(bases, vocabulary, derive_seed(seed, 1));
  out.insert(out.end(), randomized.begin(), randomized.end());
  return out;
}

std::vector<std::string> default_random_vocabulary(const Dataset& dataset) {
  auto words = split_vocabulary(dataset.train);
  std::erase_if(words, [](const std::string& w) { return !usable_word(w); });
  if (words.empty()) throw DataError("training split has no usable tokens for a random vocabulary");
  return words;
}

FeatureMatrix drop_blocks(const FeatureMatrix& matrix, std::span<const std::string> source_ids) {
  check_layout(matrix.layout, matrix.x.cols);
  std::unordered_set<std::string> drop(source_ids.begin(), source_ids.end());
  for (const auto& id : drop) {
    const bool present = std::any_of(matrix.layout.begin(), matrix.layout.end(),
                                     [&](const Block& b) { return b.source_id == id; });
    if (!present) throw DataError("cannot drop unknown block \"" + id + "\"");
  }
  FeatureMatrix out;
  out.labels = matrix.labels;
  out.ids = matrix.ids;
  std::vector<const Block*> kept;
  std::size_t width = 0;
  for (const auto& b : matrix.layout) {
    if (drop.count(b.source_id)) continue;
    kept.push_back(&b);
    out.layout.push_back({b.source_id, width, b.length});
    width += b.length;
  }
  out.x = Matrix(matrix.x.rows, width);
  for (std::size_t r = 0; r < matrix.x.rows; ++r) {
    const auto src = matrix.x.row(r);
    auto dst = out.x.row(r);
    for (std::size_t k = 0; k < kept.size(); ++k) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(kept[k]->offset), kept[k]->length,
                  dst.begin() + static_cast<std::ptrdiff_t>(out.layout[k].offset));
    }
  }
  return out;
}

}  // namespace expbert
