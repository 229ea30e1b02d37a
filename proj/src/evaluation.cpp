#include "expbert/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "expbert/error.hpp"

namespace expbert {
namespace {

void check_lengths(std::span<const int> predictions, std::span<const int> golds) {
  if (predictions.size() != golds.size()) {
    throw DataError("prediction count " + std::to_string(predictions.size()) + " does not match gold count " +
                    std::to_string(golds.size()));
  }
}

PrfScore from_counts(std::size_t tp, std::size_t predicted, std::size_t actual) {
  PrfScore s;
  s.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
  s.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
  const double sum = s.precision + s.recall;
  s.f1 = sum > 0.0 ? 2.0 * s.precision * s.recall / sum : 0.0;
  return s;
}

}  // namespace

ConfusionCounts confusion_counts(std::span<const int> predictions, std::span<const int> golds,
                                 std::size_t num_labels) {
  check_lengths(predictions, golds);
  ConfusionCounts counts;
  counts.true_positives.assign(num_labels, 0);
  counts.false_positives.assign(num_labels, 0);
  counts.false_negatives.assign(num_labels, 0);
  counts.total = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i];
    const int g = golds[i];
    if (p < 0 || g < 0 || static_cast<std::size_t>(p) >= num_labels || static_cast<std::size_t>(g) >= num_labels) {
      throw DataError("label id out of range at position " + std::to_string(i));
    }
    if (p == g) {
      ++counts.true_positives[static_cast<std::size_t>(p)];
    } else {
      ++counts.false_positives[static_cast<std::size_t>(p)];
      ++counts.false_negatives[static_cast<std::size_t>(g)];
    }
  }
  return counts;
}

PrfScore prf_binary(std::span<const int> predictions, std::span<const int> golds, int positive_label) {
  check_lengths(predictions, golds);
  std::size_t tp = 0;
  std::size_t predicted = 0;
  std::size_t actual = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] == positive_label;
    const bool g = golds[i] == positive_label;
    tp += p && g;
    predicted += p;
    actual += g;
  }
  return from_counts(tp, predicted, actual);
}

double f1_binary(std::span<const int> predictions, std::span<const int> golds, int positive_label) {
  return prf_binary(predictions, golds, positive_label).f1;
}

PrfScore prf_micro_excluding_no_relation(std::span<const int> predictions, std::span<const int> golds,
                                         int no_relation) {
  check_lengths(predictions, golds);
  std::size_t correct = 0;
  std::size_t predicted = 0;
  std::size_t actual = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i];
    const int g = golds[i];
    if (p != no_relation) ++predicted;
    if (g != no_relation) ++actual;
    if (p != no_relation && p == g) ++correct;
  }
  return from_counts(correct, predicted, actual);
}

double f1_micro_excluding_no_relation(std::span<const int> predictions, std::span<const int> golds,
                                      int no_relation) {
  return prf_micro_excluding_no_relation(predictions, golds, no_relation).f1;
}

Metric metric_for(const LabelSpace& labels) {
  if (labels.size() < 2) throw ConfigError("label space needs at least two labels");
  const auto none = labels.no_relation_index();
  if (labels.size() == 2) {
    const int positive = none ? 1 - *none : 1;
    return [positive](std::span<const int> p, std::span<const int> g) { return f1_binary(p, g, positive); };
  }
  if (!none) throw ConfigError("multi-class label space needs a no_relation label for micro F1");
  const int no_relation = *none;
  return [no_relation](std::span<const int> p, std::span<const int> g) {
    return f1_micro_excluding_no_relation(p, g, no_relation);
  };
}

double t_critical_95(std::size_t dof) {
  if (dof == 0) throw ConfigError("t interval needs at least one degree of freedom");
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

AggregateResult aggregate_runs(std::span<const double> f1s) {
  if (f1s.size() < 2) throw ConfigError("confidence interval needs at least 2 runs, got " + std::to_string(f1s.size()));
  AggregateResult out;
  out.runs.assign(f1s.begin(), f1s.end());
  const double n = static_cast<double>(f1s.size());
  out.mean = std::accumulate(f1s.begin(), f1s.end(), 0.0) / n;
  double ss = 0.0;
  for (double f : f1s) ss += (f - out.mean) * (f - out.mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  out.ci_half_width = t_critical_95(f1s.size() - 1) * sd / std::sqrt(n);
  // Keep the mean inside [min, max] despite rounding in the sum.
  const auto [lo, hi] = std::minmax_element(f1s.begin(), f1s.end());
  out.mean = std::clamp(out.mean, *lo, *hi);
  return out;
}

std::string format_mean_ci(const AggregateResult& result) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.1f ± %.2f", 100.0 * result.mean, 100.0 * result.ci_half_width);
  return buffer;
}

const RunResult& tacred_median_run(std::span<const RunResult> runs) {
  if (runs.size() != 5) throw ConfigError("median protocol needs exactly 5 runs, got " + std::to_string(runs.size()));
  std::vector<std::size_t> order(runs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = runs[a];
    const auto& y = runs[b];
    if (x.early_stopped_val_f1 != y.early_stopped_val_f1) return x.early_stopped_val_f1 < y.early_stopped_val_f1;
    if (x.seed != y.seed) return x.seed < y.seed;
    return x.test_f1 < y.test_f1;
  });
  return runs[order[2]];
}

double tacred_protocol(std::span<const RunResult> runs) { return tacred_median_run(runs).test_f1; }

}  // namespace expbert
