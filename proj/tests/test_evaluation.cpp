#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "expbert/error.hpp"
#include "expbert/evaluation.hpp"
#include "expbert/rng.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace expbert;

namespace {

std::vector<int> draw_labels(Rng& rng, std::size_t n, std::size_t k, double none_rate) {
  std::vector<int> out(n);
  for (auto& v : out) v = rng.uniform() < none_rate ? 0 : static_cast<int>(rng.below(k));
  return out;
}

RunResult run(std::uint64_t seed, double val, double test) {
  RunResult r;
  r.seed = seed;
  r.early_stopped_val_f1 = val;
  r.test_f1 = test;
  return r;
}

}  // namespace

TEST_CASE("binary F1 matches the confusion-table oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 1 + rng.below(60);
    const double skew = rng.uniform();
    const auto pred = draw_labels(rng, n, 2, skew);
    const auto gold = draw_labels(rng, n, 2, skew);
    const int positive = trial % 4 == 0 ? 0 : 1;
    REQUIRE(f1_binary(pred, gold, positive) == oracle::binary_f1(pred, gold, positive));
  }
}

TEST_CASE("micro F1 without no_relation matches the confusion-table oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = 1 + rng.below(200);
    const double none_rate = rng.uniform();
    const auto pred = draw_labels(rng, n, 42, none_rate);
    const auto gold = draw_labels(rng, n, 42, none_rate);
    REQUIRE(f1_micro_excluding_no_relation(pred, gold, 0) == oracle::micro_f1(pred, gold, 42, 0));
  }
}

TEST_CASE("F1 edge cases") {
  const std::vector<int> none = {0, 0, 0};
  CHECK(f1_binary(none, none, 1) == 0.0);
  CHECK(f1_micro_excluding_no_relation(none, none, 0) == 0.0);
  const std::vector<int> p = {1, 1, 0, 0}, g = {1, 0, 1, 0};
  const auto s = prf_binary(p, g, 1);
  CHECK(s.precision == 0.5);
  CHECK(s.recall == 0.5);
  CHECK(s.f1 == 0.5);
  // A wrong non-none label counts against precision and recall.
  const std::vector<int> p3 = {2, 1, 0}, g3 = {1, 1, 2};
  const auto m = prf_micro_excluding_no_relation(p3, g3, 0);
  CHECK(m.precision == 0.5);
  CHECK(m.recall == doctest::Approx(1.0 / 3.0));
  const std::vector<int> shorter = {1};
  CHECK_THROWS_AS(f1_binary(shorter, g, 1), DataError);
  const std::vector<int> out_of_range = {0, 5};
  CHECK_THROWS_AS(confusion_counts(out_of_range, out_of_range, 3), DataError);
}

TEST_CASE("metric selection by label space") {
  const auto binary = metric_for(test::binary_labels());
  const std::vector<int> p = {1, 1, 0, 0}, g = {1, 0, 1, 1};
  CHECK(binary(p, g) == oracle::binary_f1(p, g, 1));
  LabelSpace three({{"no_relation", "a {o1}"}, {"x", "b {o1}"}, {"y", "c {o1}"}});
  const std::vector<int> p3 = {2, 1, 0, 1}, g3 = {2, 2, 0, 1};
  CHECK(metric_for(three)(p3, g3) == oracle::micro_f1(p3, g3, 3, 0));
  LabelSpace no_none({{"a", "a {o1}"}, {"b", "b {o1}"}, {"c", "c {o1}"}});
  CHECK_THROWS_AS(metric_for(no_none), ConfigError);
}

TEST_CASE("t critical values") {
  CHECK(t_critical_95(4) == doctest::Approx(2.776).epsilon(1e-3));
  CHECK(t_critical_95(1) == doctest::Approx(12.706).epsilon(1e-3));
  CHECK(t_critical_95(9) == doctest::Approx(2.262).epsilon(1e-3));
  CHECK(t_critical_95(100000) == doctest::Approx(1.960).epsilon(1e-3));
  CHECK_THROWS_AS(t_critical_95(0), ConfigError);
}

TEST_CASE("t interval over five runs") {
  const std::vector<double> f1s = {0.60, 0.62, 0.64, 0.66, 0.68};
  const auto agg = aggregate_runs(f1s);
  CHECK(agg.mean == doctest::Approx(0.64));
  CHECK(std::abs(agg.ci_half_width - 0.0393) < 1e-3);
  CHECK(agg.runs == f1s);
  const std::vector<double> same = {0.5, 0.5, 0.5};
  CHECK(aggregate_runs(same).ci_half_width == 0.0);
  CHECK(aggregate_runs(same).mean == 0.5);
  const std::vector<double> one = {0.5};
  CHECK_THROWS_AS(aggregate_runs(one), ConfigError);

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs(2 + rng.below(8));
    for (auto& x : xs) x = rng.uniform();
    const auto a = aggregate_runs(xs);
    REQUIRE(a.ci_half_width >= 0.0);
    REQUIRE(a.mean >= *std::min_element(xs.begin(), xs.end()));
    REQUIRE(a.mean <= *std::max_element(xs.begin(), xs.end()));
  }
}

TEST_CASE("report formatting") {
  AggregateResult r;
  r.mean = 0.635;
  r.ci_half_width = 0.014;
  CHECK(format_mean_ci(r) == "63.5 ± 1.40");
  r.mean = 0.529;
  r.ci_half_width = 0.0097;
  CHECK(format_mean_ci(r) == "52.9 ± 0.97");
}

TEST_CASE("median-run protocol") {
  std::vector<RunResult> runs = {run(1, 0.1, 0.11), run(2, 0.2, 0.22), run(3, 0.3, 0.33), run(4, 0.4, 0.44),
                                 run(5, 0.5, 0.55)};
  CHECK(tacred_protocol(runs) == 0.33);
  std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  do {
    REQUIRE(tacred_protocol(runs) == 0.33);
  } while (std::next_permutation(runs.begin(), runs.end(),
                                 [](const auto& a, const auto& b) { return a.seed < b.seed; }));

  // Ties on validation F1 are broken by seed.
  std::vector<RunResult> tied = {run(9, 0.5, 0.9), run(3, 0.5, 0.3), run(1, 0.1, 0.0), run(7, 0.5, 0.7),
                                 run(8, 0.9, 1.0)};
  CHECK(tacred_median_run(tied).seed == 7);
  std::reverse(tied.begin(), tied.end());
  CHECK(tacred_median_run(tied).seed == 7);

  runs.pop_back();
  CHECK_THROWS_AS(tacred_protocol(runs), ConfigError);
}
