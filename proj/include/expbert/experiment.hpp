#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "expbert/evaluation.hpp"
#include "expbert/experiment_config.hpp"
#include "expbert/trainer.hpp"

namespace expbert {

// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitService = 4,
  kExitDivergence = 5,
};

// Maps the exception currently being handled to an exit code.
int exit_code_for_current_exception();

struct RoleSummary {
  std::string role;  // "u", "v" or "extras"
  std::filesystem::path cache;
  std::size_t texts = 0;
  std::size_t dim = 0;
  std::size_t lookups = 0;  // instances x texts
  std::size_t rows = 0;
  std::size_t computed = 0;
  std::size_t hits = 0;
};

struct FeaturizeSummary {
  std::vector<RoleSummary> roles;
  std::size_t instances = 0;
  std::size_t instance_dim = 0;  // width of one assembled representation

  double hit_rate() const;
};

struct TrainReport {
  GridSelection selection;
  AggregateResult aggregate;
  std::size_t input_dim = 0;
};

struct SweepPoint {
  double fraction = 0.0;
  std::size_t train_size = 0;
  std::vector<std::string> train_ids;  // sorted
  AggregateResult aggregate;
  std::string config_hash;
};

struct SweepReport {
  std::vector<SweepPoint> points;  // ascending fraction
  bool nested = true;              // every smaller subset lies inside every larger one
};

struct AblationRow {
  std::string name;
  std::size_t explanations = 0;
  std::size_t input_dim = 0;
  AggregateResult aggregate;
  std::string config_hash;
};

struct AblationReport {
  AblationMode mode = AblationMode::kGroupCumulative;
  std::vector<AblationRow> rows;
};

// Each command validates the config, reads the dataset and writes its
// results under the config's output directory. Progress goes to `log`.
FeaturizeSummary cmd_featurize(const ExperimentConfig& config, std::ostream& log);
TrainReport cmd_train(const ExperimentConfig& config, std::ostream& log);
SweepReport cmd_sweep(const ExperimentConfig& config, std::ostream& log);
AblationReport cmd_ablate(const ExperimentConfig& config, std::ostream& log);
// Writes the randomized explanation file for the config's ablation plan (a
// random_only plan when none is set) and returns its contents.
std::vector<Explanation> cmd_random_explanations(const ExperimentConfig& config, const std::filesystem::path& out,
                                                 std::ostream& log);
// Collects report.json, sweep.json and ablation.json from the output
// directory into one tab-separated table.
void cmd_report(const ExperimentConfig& config, std::ostream& out);

// Location of a role's feature cache; the name encodes the interpreter
// settings so caches for different interpreters never mix.
std::filesystem::path cache_path(const ExperimentConfig& config, const std::string& role, const InterpreterSpec& spec);

// Aggregates runs under the configured protocol.
AggregateResult apply_protocol(Protocol protocol, std::span<const RunResult> runs);

}  // namespace expbert
