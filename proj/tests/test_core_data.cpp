#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "expbert/core_data.hpp"
#include "expbert/error.hpp"
#include "support.hpp"

using namespace expbert;

namespace {

const char* kLabels =
    "{\"name\":\"no_relation\",\"description\":\"{o1} and {o2} are unrelated\"}\n"
    "{\"name\":\"spouse\",\"description\":\"{o1} is married to {o2}\"}\n";

void write_splits(const test::TempDir& dir, const std::string& train, const std::string& val = "",
                  const std::string& test = "", const std::string& ext = ".jsonl") {
  test::write_file(dir / "labels.jsonl", kLabels);
  test::write_file(dir / ("train" + ext), train);
  test::write_file(dir / ("val" + ext), val);
  test::write_file(dir / ("test" + ext), test);
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("instance validation") {
  auto inst = test::make_instance("a", "Ann married Bob", 0, 2);
  CHECK_NOTHROW(validate_instance(inst));
  inst.span2 = {0, 0};
  CHECK_THROWS_AS(validate_instance(inst), DataError);
  inst.span2 = {3, 3};
  CHECK_THROWS_AS(validate_instance(inst), DataError);
  inst.span2 = {2, 1};
  CHECK_THROWS_AS(validate_instance(inst), DataError);
}

TEST_CASE("label space") {
  const auto labels = test::binary_labels();
  CHECK(labels.size() == 2);
  CHECK(labels.no_relation_index() == 0);
  CHECK(labels.index_of("spouse") == 1);
  CHECK_FALSE(labels.index_of("other"));
  CHECK_THROWS_AS(LabelSpace({{"a", "x"}, {"a", "y"}}), DataError);
  CHECK_THROWS_AS(LabelSpace(std::vector<std::pair<std::string, std::string>>{{"a", ""}}), DataError);
  CHECK_FALSE(LabelSpace(std::vector<std::pair<std::string, std::string>>{{"a", "x"}, {"b", "y"}}).no_relation_index());
}

TEST_CASE("template validation accepts only literal placeholders") {
  CHECK_NOTHROW(validate_template("{o1} is married to {o2}"));
  CHECK_NOTHROW(validate_template("someone is married to {o1}"));
  CHECK_THROWS_AS(validate_template(""), DataError);
  CHECK_THROWS_AS(validate_template("{o3} is here"), DataError);
  CHECK_THROWS_AS(validate_template("{O1} is here"), DataError);
  CHECK_THROWS_AS(validate_template("{o1 is here"), DataError);
  CHECK_THROWS_AS(validate_template("x } y"), DataError);
}

TEST_CASE("jsonl dataset round trip") {
  test::TempDir dir;
  const auto d = test::tiny_dataset(5);
  write_dataset(d, dir.path(), DatasetFormat::kJsonl);
  auto back = load_dataset(dir.path(), DatasetFormat::kJsonl);
  back.name = d.name;
  CHECK(back == d);
}

TEST_CASE("tsv dataset round trip including unlabelled rows") {
  test::TempDir dir;
  auto d = test::tiny_dataset(4);
  d.test[0].gold.reset();
  write_dataset(d, dir.path(), DatasetFormat::kTsv);
  auto back = load_dataset(dir.path(), DatasetFormat::kTsv);
  back.name = d.name;
  CHECK(back == d);
}

TEST_CASE("tsv parsing") {
  test::TempDir dir;
  write_splits(dir, "x1\tAnn married Bob\t0,0\t2,2\tspouse\nx2\tAnn saw the Bob\t0,0\t2,3\t\n", "", "", ".tsv");
  const auto d = load_dataset(dir.path(), DatasetFormat::kTsv);
  REQUIRE(d.train.size() == 2);
  CHECK(d.train[0].gold == 1);
  CHECK(d.train[1].span2 == TokenSpan{2, 3});
  CHECK_FALSE(d.train[1].gold);
}

TEST_CASE("empty split files give an empty but valid dataset") {
  test::TempDir dir;
  write_splits(dir, "");
  const auto d = load_dataset(dir.path(), DatasetFormat::kJsonl);
  CHECK(d.size() == 0);
  CHECK(d.label_space.size() == 2);
}

TEST_CASE("malformed rows are rejected with file and row number") {
  test::TempDir dir;
  const std::string good = R"({"id":"a","tokens":["Ann","met","Bob"],"span1":[0,0],"span2":[2,2],"label":"spouse"})";

  write_splits(dir, good + "\n" + R"({"id":"b","tokens":["Ann","met"],"span1":[0,0],"span2":[2,2],"label":null})");
  auto msg = error_of([&] { load_dataset(dir.path(), DatasetFormat::kJsonl); });
  CHECK(msg.find("train.jsonl:2") != std::string::npos);
  CHECK(msg.find("out of bounds") != std::string::npos);

  write_splits(dir, R"({"id":"a","tokens":["Ann","met","Bob"],"span1":[0,0],"span2":[2,2],"label":"divorced"})");
  msg = error_of([&] { load_dataset(dir.path(), DatasetFormat::kJsonl); });
  CHECK(msg.find("train.jsonl:1") != std::string::npos);
  CHECK(msg.find("unknown label") != std::string::npos);

  write_splits(dir, good + "\n" + good);
  msg = error_of([&] { load_dataset(dir.path(), DatasetFormat::kJsonl); });
  CHECK(msg.find("duplicate id") != std::string::npos);

  write_splits(dir, good, good);
  msg = error_of([&] { load_dataset(dir.path(), DatasetFormat::kJsonl); });
  CHECK(msg.find("another split") != std::string::npos);

  std::filesystem::remove(dir / "val.jsonl");
  CHECK_THROWS_AS(load_dataset(dir.path(), DatasetFormat::kJsonl), DataError);
  CHECK_THROWS_AS(load_dataset(dir / "nope", DatasetFormat::kJsonl), DataError);
}

TEST_CASE("explanation files keep order and reject duplicates") {
  test::TempDir dir;
  const std::vector<Explanation> ex = {{"b", "{o1} married {o2}", "Married"}, {"a", "{o1} is a person", "Misc"}};
  write_explanations(ex, dir / "e.jsonl");
  CHECK(load_explanations(dir / "e.jsonl") == ex);
  test::write_file(dir / "dup.jsonl", R"({"id":"a","template":"{o1} x","group":"g"})"
                                      "\n"
                                      R"({"id":"a","template":"{o2} y","group":"g"})"
                                      "\n");
  CHECK_THROWS_AS(load_explanations(dir / "dup.jsonl"), DataError);
  test::write_file(dir / "bad.jsonl", R"({"id":"a","template":"{x} y","group":"g"})"
                                      "\n");
  CHECK_THROWS_AS(load_explanations(dir / "bad.jsonl"), DataError);
}

TEST_CASE("shipped explanation and label files") {
  const std::filesystem::path data = EXPBERT_SOURCE_DIR "/data";
  const auto spouse = load_explanations(data / "spouse/explanations.jsonl");
  CHECK(spouse.size() == 40);
  std::map<std::string, int> groups;
  for (const auto& e : spouse) ++groups[e.group];
  CHECK(groups["Married"] == 10);
  CHECK(groups["Children"] == 5);
  CHECK(groups["Engaged"] == 3);
  CHECK(groups["Negatives"] == 13);
  CHECK(groups["Misc"] == 9);
  CHECK(spouse.front().template_text == "{o1} and {o2} have a marriage license");

  CHECK(load_explanations(data / "disease/explanations.jsonl").size() == 28);
  CHECK(load_label_space(data / "spouse/labels.jsonl").size() == 2);
  CHECK(load_label_space(data / "disease/labels.jsonl").size() == 2);
  const auto tacred = load_label_space(data / "tacred/labels.jsonl");
  CHECK(tacred.size() == 42);
  CHECK(tacred.no_relation_index() == 0);
}

TEST_CASE("subsample sizes") {
  CHECK(subsample_indices(100, 1.0, 3).size() == 100);
  CHECK(subsample_indices(100, 0.29, 3).size() == 29);
  CHECK(subsample_indices(7, 0.5, 3).size() == 3);
  CHECK(subsample_indices(0, 0.5, 3).empty());
  CHECK_THROWS_AS(subsample_indices(10, 0.0, 3), ConfigError);
  CHECK_THROWS_AS(subsample_indices(10, 1.5, 3), ConfigError);
  const auto all = subsample_indices(50, 1.0, 9);
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
}

TEST_CASE("subsamples are nested for every fraction pair and 100 seeds") {
  const double fractions[] = {0.01, 0.05, 0.1, 0.2, 0.25, 0.5, 0.75, 1.0};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::vector<std::vector<std::size_t>> picks;
    for (double f : fractions) picks.push_back(subsample_indices(997, f, seed));
    for (std::size_t a = 0; a < picks.size(); ++a) {
      CHECK(std::is_sorted(picks[a].begin(), picks[a].end()));
      for (std::size_t b = a + 1; b < picks.size(); ++b) {
        REQUIRE(std::includes(picks[b].begin(), picks[b].end(), picks[a].begin(), picks[a].end()));
      }
    }
  }
}

TEST_CASE("subsample_split leaves val and test alone") {
  const auto d = test::tiny_dataset(20);
  const auto s = subsample_split(d, 0.5, 4);
  CHECK(s.train.size() == 10);
  CHECK(s.val == d.val);
  CHECK(s.test == d.test);
  CHECK(subsample_split(d, 0.5, 4) == s);
}

TEST_CASE("split vocabulary is sorted and distinct") {
  const auto d = test::tiny_dataset(10);
  const auto v = split_vocabulary(d.train);
  CHECK(std::is_sorted(v.begin(), v.end()));
  CHECK(std::set<std::string>(v.begin(), v.end()).size() == v.size());
}
