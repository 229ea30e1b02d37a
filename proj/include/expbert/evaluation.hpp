#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "expbert/core_data.hpp"
#include "expbert/run_result.hpp"

namespace expbert {

struct ConfusionCounts {
  std::vector<std::size_t> true_positives;   // per label
  std::vector<std::size_t> false_positives;
  std::vector<std::size_t> false_negatives;
  std::size_t total = 0;
};

// Per-label counts. Throws DataError on length mismatch or ids outside [0, num_labels).
ConfusionCounts confusion_counts(std::span<const int> predictions, std::span<const int> golds,
                                 std::size_t num_labels);

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Precision, recall and F1 on one positive class. 0/0 is scored 0.
PrfScore prf_binary(std::span<const int> predictions, std::span<const int> golds, int positive_label);
double f1_binary(std::span<const int> predictions, std::span<const int> golds, int positive_label);

// Micro-averaged over every label except no_relation: a prediction counts as
// correct only when it is not no_relation and equals the gold label.
PrfScore prf_micro_excluding_no_relation(std::span<const int> predictions, std::span<const int> golds,
                                         int no_relation);
double f1_micro_excluding_no_relation(std::span<const int> predictions, std::span<const int> golds,
                                      int no_relation);

using Metric = std::function<double(std::span<const int> predictions, std::span<const int> golds)>;

// Binary label spaces are scored on the label that is not no_relation (or
// label 1 when neither is no_relation); larger spaces use the micro variant
// and need a no_relation label.
Metric metric_for(const LabelSpace& labels);

struct AggregateResult {
  std::vector<double> runs;
  double mean = 0.0;
  double ci_half_width = 0.0;  // two-sided 95% Student-t interval
  std::string protocol = "ci_runs";
};

// Two-sided 95% critical value of Student's t with `dof` degrees of freedom.
double t_critical_95(std::size_t dof);

// Mean and t-interval half-width over at least two runs.
AggregateResult aggregate_runs(std::span<const double> f1s);

// "63.5 ± 1.40": mean and half-width in F1 points.
std::string format_mean_ci(const AggregateResult& result);

// Test F1 of the run whose early-stopped validation F1 is the median of
// exactly five runs. Ties are ordered by seed.
double tacred_protocol(std::span<const RunResult> runs);
const RunResult& tacred_median_run(std::span<const RunResult> runs);

}  // namespace expbert
