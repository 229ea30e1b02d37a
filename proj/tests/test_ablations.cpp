#include <doctest.h>

#include <regex>
#include <set>

#include "expbert/ablations.hpp"
#include "expbert/error.hpp"
#include "support.hpp"

using namespace expbert;

namespace {

const std::filesystem::path kData = EXPBERT_SOURCE_DIR "/data";

// Placeholders and whitespace kept, every other run of characters replaced by W.
std::string skeleton(const std::string& text) {
  static const std::regex word(R"(((?!\{o[12]\})[^\s])+)");
  std::string marked = std::regex_replace(text, std::regex(R"(\{o1\})"), "\x01");
  marked = std::regex_replace(marked, std::regex(R"(\{o2\})"), "\x02");
  marked = std::regex_replace(marked, std::regex("[^\\s\x01\x02]+"), "W");
  marked = std::regex_replace(marked, std::regex("\x01"), "{o1}");
  return std::regex_replace(marked, std::regex("\x02"), "{o2}");
}

std::vector<std::string> words_of(const std::string& text) {
  std::string stripped = std::regex_replace(text, std::regex(R"(\{o[12]\})"), " ");
  std::vector<std::string> out;
  std::istringstream in(stripped);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

TEST_CASE("cumulative groups on the spouse explanations") {
  const auto ex = load_explanations(kData / "spouse/explanations.jsonl");
  const std::vector<std::string> order = {"Married", "Children", "Engaged", "Negatives", "Misc"};
  const auto subsets = cumulative_groups(ex, order);
  REQUIRE(subsets.size() == 6);
  const std::size_t sizes[] = {0, 10, 15, 18, 31, 40};
  for (std::size_t k = 0; k < 6; ++k) CHECK(subsets[k].size() == sizes[k]);
  CHECK(subsets[5] == ex);
  for (std::size_t k = 1; k < 6; ++k) {
    // Each subset keeps file order and contains the previous one.
    std::set<std::string> prev;
    for (const auto& e : subsets[k - 1]) prev.insert(e.id);
    std::size_t seen = 0;
    for (const auto& e : subsets[k]) seen += prev.count(e.id);
    CHECK(seen == prev.size());
    for (std::size_t i = 1; i < subsets[k].size(); ++i) CHECK(subsets[k][i - 1].id < subsets[k][i].id);
  }
  CHECK(cumulative_groups(ex, {}).size() == 1);
  const std::vector<std::string> bad = {"Married", "Divorced"};
  CHECK_THROWS_AS(cumulative_groups(ex, bad), ConfigError);
}

TEST_CASE("plan validation") {
  const auto ex = load_explanations(kData / "spouse/explanations.jsonl");
  AblationPlan plan;
  plan.group_order = {"Married", "Misc"};
  CHECK_NOTHROW(validate(plan, ex));
  plan.group_order = {"Married", "Married"};
  CHECK_THROWS_AS(validate(plan, ex), ConfigError);
  plan.group_order = {"Nope"};
  CHECK_THROWS_AS(validate(plan, ex), ConfigError);
  plan.group_order = {};
  plan.runs = 0;
  CHECK_THROWS_AS(validate(plan, ex), ConfigError);
  CHECK(parse_ablation_mode("orig_plus_random") == AblationMode::kOrigPlusRandom);
  CHECK(ablation_mode_name(AblationMode::kGroupCumulative) == "group_cumulative");
  CHECK_THROWS_AS(parse_ablation_mode("shuffle"), ConfigError);
}

TEST_CASE("randomized explanations keep their structure") {
  const auto ex = load_explanations(kData / "spouse/explanations.jsonl");
  const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "x'y", "z.", "q"};
  const std::set<std::string> vocab_set(vocab.begin(), vocab.end());
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = randomize_explanations(ex, vocab, seed);
    REQUIRE(r.size() == ex.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      REQUIRE(r[i].id == "random-" + std::to_string(i));
      REQUIRE(r[i].group == "random");
      REQUIRE(skeleton(r[i].template_text) == skeleton(ex[i].template_text));
      for (const auto& w : words_of(r[i].template_text)) REQUIRE(vocab_set.count(w) == 1);
      REQUIRE_NOTHROW(validate_template(r[i].template_text));
    }
    REQUIRE(r == randomize_explanations(ex, vocab, seed));
  }
  CHECK(randomize_explanations(ex, vocab, 1) != randomize_explanations(ex, vocab, 2));
  // Words glued to a placeholder are still replaced.
  const std::vector<Explanation> glued = {{"g", "{o1}'s wife is {o2}", "x"}};
  const std::vector<std::string> one = {"w"};
  CHECK(randomize_explanations(glued, one, 0)[0].template_text == "{o1}w w w {o2}");

  const std::vector<std::string> empty;
  CHECK_THROWS_AS(randomize_explanations(ex, empty, 0), ConfigError);
  const std::vector<std::string> braces = {"ok", "{o1}"};
  CHECK_THROWS_AS(randomize_explanations(ex, braces, 0), ConfigError);
  const std::vector<std::string> spaced = {"two words"};
  CHECK_THROWS_AS(randomize_explanations(ex, spaced, 0), ConfigError);
}

TEST_CASE("originals plus random explanations") {
  const auto ex = load_explanations(kData / "spouse/explanations.jsonl");
  const std::vector<std::string> vocab = {"a", "b", "c"};
  const auto combined = combine_orig_random(ex, 10, vocab, 5);
  REQUIRE(combined.size() == 50);
  CHECK(std::equal(ex.begin(), ex.end(), combined.begin()));
  std::set<std::string> ids;
  for (const auto& e : combined) ids.insert(e.id);
  CHECK(ids.size() == 50);
  for (std::size_t i = 40; i < 50; ++i) CHECK(combined[i].group == "random");
  CHECK(combined == combine_orig_random(ex, 10, vocab, 5));
  CHECK(combine_orig_random(ex, 0, vocab, 5) == ex);
  // k beyond the originals cycles through them.
  const std::vector<Explanation> two = {{"a", "{o1} x {o2}", "g"}, {"b", "{o2} y z", "g"}};
  const auto many = combine_orig_random(two, 5, vocab, 1);
  CHECK(many.size() == 7);
  std::size_t long_ones = 0;
  for (std::size_t i = 2; i < 7; ++i) long_ones += skeleton(many[i].template_text) == "{o2} W W";
  CHECK((long_ones == 2 || long_ones == 3));
}

TEST_CASE("default vocabulary comes from training tokens") {
  auto d = test::tiny_dataset(10);
  d.train[0].tokens[1] = "{weird}";
  d.val[0].tokens[1] = "valonly";
  const auto v = default_random_vocabulary(d);
  CHECK(std::find(v.begin(), v.end(), "{weird}") == v.end());
  CHECK(std::find(v.begin(), v.end(), "valonly") == v.end());
  CHECK(std::is_sorted(v.begin(), v.end()));
  CHECK_FALSE(v.empty());
}

TEST_CASE("dropping blocks from a feature matrix") {
  FeatureMatrix m;
  m.layout = {{"u", 0, 2}, {"e1", 2, 1}, {"e2", 3, 2}};
  m.x = Matrix(2, 5);
  for (std::size_t i = 0; i < 10; ++i) m.x.data[i] = static_cast<float>(i);
  m.labels = {0, 1};
  m.ids = {"a", "b"};
  const std::vector<std::string> drop = {"e1"};
  const auto out = drop_blocks(m, drop);
  CHECK(out.x.cols == 4);
  CHECK(out.x.data == std::vector<float>{0, 1, 3, 4, 5, 6, 8, 9});
  CHECK(out.layout == std::vector<Block>{{"u", 0, 2}, {"e2", 2, 2}});
  CHECK(out.labels == m.labels);
  CHECK(out.ids == m.ids);
  const std::vector<std::string> unknown = {"e9"};
  CHECK_THROWS_AS(drop_blocks(m, unknown), DataError);
}
