#include <doctest.h>

#include "expbert/error.hpp"
#include "expbert/representation.hpp"
#include "expbert/templating.hpp"
#include "support.hpp"

using namespace expbert;

namespace {

const std::filesystem::path kData = EXPBERT_SOURCE_DIR "/data";

// Constant-valued interpreter of a given width.
class FixedInterpreter final : public Interpreter {
 public:
  FixedInterpreter(std::size_t dim, float value) : dim_(dim), value_(value) {}
  InterpreterKind kind() const override { return InterpreterKind::kNliProb; }
  std::size_t dim() const override { return dim_; }
  std::vector<float> interpret(const Instance&, std::string_view) const override {
    return std::vector<float>(dim_, value_);
  }

 private:
  std::size_t dim_;
  float value_;
};

class WrongWidth final : public Interpreter {
 public:
  InterpreterKind kind() const override { return InterpreterKind::kHash; }
  std::size_t dim() const override { return 4; }
  std::vector<float> interpret(const Instance&, std::string_view) const override { return {1, 2, 3}; }
};

}  // namespace

TEST_CASE("u has one 768-wide block per label") {
  const auto labels = load_label_space(kData / "tacred/labels.jsonl");
  HashInterpreter nli(768, 0);
  const auto inst = test::make_instance("a", "Ann married Bob", 0, 2);
  const auto u = build_u(inst, labels, nli);
  CHECK(u.values.size() == 32256);
  REQUIRE(u.blocks.size() == 42);
  CHECK(u.blocks[0].source_id == "label:no_relation");
  CHECK(u.blocks[41].offset == 41 * 768);
  // Each block is the interpreter applied to the instantiated description.
  const auto& d = labels.labels()[5];
  const auto expected = hash_interpret("a", instantiate(inst, "", d.description).text, 768, 0);
  CHECK(std::equal(expected.begin(), expected.end(), u.values.begin() + 5 * 768));
}

TEST_CASE("dimensions under each v interpreter") {
  const auto labels = load_label_space(kData / "spouse/labels.jsonl");
  const auto explanations = load_explanations(kData / "spouse/explanations.jsonl");
  HashInterpreter nli(768, 0);
  const auto inst = test::make_instance("a", "Ann is married to Bob", 0, 4);
  const auto u = build_u(inst, labels, nli);

  const auto full = assemble(u, build_v(inst, explanations, nli));
  CHECK(full.size() == 768 * 2 + 768 * 40);
  CHECK(full.u_length == 1536);
  CHECK(full.v_length == 30720);

  FixedInterpreter prob(1, 0.5f);
  const auto with_prob = assemble(u, build_v(inst, explanations, prob));
  CHECK(with_prob.size() == 1536 + 40);

  const auto patterns = extract_patterns(explanations);
  PatternInterpreter pattern;
  const auto psrc = pattern_sources(patterns);
  const auto with_patterns = assemble(u, interpret_sources(inst, psrc, pattern));
  CHECK(with_patterns.size() == 1536 + patterns.size());
  CHECK(with_patterns.v_length == patterns.size());

  const auto no_exp = assemble(u, {});
  CHECK(no_exp.size() == 1536);
  CHECK(no_exp.v_length == 0);

  std::vector<PairDictionary> dicts;
  std::vector<std::string> names;
  for (int i = 0; i < 6; ++i) {
    names.push_back("d" + std::to_string(i));
    dicts.push_back({names.back(), {}});
  }
  OntologyInterpreter onto(dicts);
  const auto dsrc = dictionary_sources(names);
  const auto extras = interpret_sources(inst, dsrc, onto);
  const auto with_onto = assemble(u, build_v(inst, explanations, nli), &extras);
  CHECK(with_onto.size() == full.size() + 6);
  CHECK(with_onto.extras_length == 6);
  CHECK(with_onto.layout.back().source_id == "ontology:d5");
}

TEST_CASE("layout checks") {
  CHECK_NOTHROW(check_layout(std::vector<Block>{{"a", 0, 2}, {"b", 2, 3}}, 5));
  CHECK_THROWS_AS(check_layout(std::vector<Block>{{"a", 0, 2}, {"b", 3, 3}}, 6), DataError);
  CHECK_THROWS_AS(check_layout(std::vector<Block>{{"a", 0, 2}}, 3), DataError);
  CHECK_THROWS_AS(assemble({}, {}), DataError);
  const auto inst = test::make_instance("a", "x y", 0, 1);
  WrongWidth bad;
  const std::vector<TextSource> src = {{"s", "{o1}"}};
  CHECK_THROWS_AS(interpret_sources(inst, src, bad), DataError);
}

TEST_CASE("dropping and masking blocks") {
  const auto inst = test::make_instance("a", "Ann is married to Bob", 0, 4);
  HashInterpreter h(3, 1);
  const std::vector<TextSource> u_src = {{"label:a", "{o1} a"}, {"label:b", "{o1} b"}};
  const std::vector<TextSource> v_src = {{"e1", "{o1} x {o2}"}, {"e2", "{o2} y"}, {"e3", "{o1} z"}};
  const auto rep = assemble(interpret_sources(inst, u_src, h), interpret_sources(inst, v_src, h));
  CHECK(rep.size() == 15);

  const std::vector<std::string> drop = {"e2"};
  const auto dropped = drop_sources(rep, drop);
  CHECK(dropped.size() == 12);
  CHECK(dropped.u_length == 6);
  CHECK(dropped.v_length == 6);
  CHECK_NOTHROW(check_layout(dropped.layout, dropped.size()));
  CHECK(dropped.layout[3].source_id == "e3");
  CHECK(std::equal(dropped.values.begin() + 9, dropped.values.end(), rep.values.begin() + 12));
  // Dropping in the middle equals building without that source.
  const std::vector<TextSource> v13 = {v_src[0], v_src[2]};
  CHECK(dropped.values == assemble(interpret_sources(inst, u_src, h), interpret_sources(inst, v13, h)).values);

  const auto masked = mask_sources(rep, drop);
  CHECK(masked.size() == 15);
  CHECK(masked.layout == rep.layout);
  for (std::size_t i = 0; i < 15; ++i) CHECK(masked.values[i] == (i >= 9 && i < 12 ? 0.0f : rep.values[i]));

  const std::vector<std::string> none;
  CHECK(drop_sources(rep, none).values == rep.values);
}

TEST_CASE("feature matrices follow the planned layout") {
  const auto d = test::tiny_dataset(6);
  HashInterpreter hu(4, 0), hv(2, 5);
  FeaturePlan plan;
  plan.u_sources = label_sources(d.label_space);
  plan.u_interpreter = &hu;
  plan.v_sources = {{"e1", "{o1} married {o2}"}};
  plan.v_interpreter = &hv;
  auto split = d.train;
  split[2].gold.reset();
  const auto fm = build_feature_matrix(plan, split);
  CHECK(fm.x.rows == 6);
  CHECK(fm.x.cols == 10);
  CHECK(fm.layout == plan_layout(plan));
  CHECK(fm.labels[2] == -1);
  CHECK(fm.labels[0] == *split[0].gold);
  CHECK(fm.ids[3] == split[3].id);
  const auto rep = build_representation(plan, split[4]);
  CHECK(std::equal(rep.values.begin(), rep.values.end(), fm.x.row(4).begin()));

  FeaturePlan missing = plan;
  missing.v_interpreter = nullptr;
  CHECK_THROWS_AS(plan_layout(missing), ConfigError);
}
