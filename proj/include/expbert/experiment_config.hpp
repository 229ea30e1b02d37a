#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "expbert/ablations.hpp"
#include "expbert/core_data.hpp"
#include "expbert/interpreters.hpp"
#include "expbert/mlp.hpp"

namespace expbert {

enum class Protocol { kCiRuns, kTacredMedian };

std::string_view protocol_name(Protocol protocol);
Protocol parse_protocol(std::string_view name);

// One experiment, as read from a JSON config file. Paths are kept exactly as
// written; resolve() interprets relative ones against the config's directory.
struct ExperimentConfig {
  static constexpr int kVersion = 1;

  std::string name = "expbert";            // model name in report rows
  std::string dataset_path;
  DatasetFormat dataset_format = DatasetFormat::kJsonl;
  std::string explanations_path;           // empty: no explanations (u only)
  InterpreterSpec u_interpreter;
  std::optional<InterpreterSpec> v_interpreter;  // defaults to u_interpreter
  std::optional<InterpreterSpec> ontology;       // extra dictionary bits when set
  GridSpec grid;
  MlpConfig classifier;                    // fixed fields; grid fields are overwritten
  Protocol protocol = Protocol::kCiRuns;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<double> fractions{1.0};
  std::uint64_t sweep_seed = 0;
  std::optional<AblationPlan> ablation;
  std::string output_dir = "out";
  std::size_t workers = 1;
  bool save_checkpoints = false;

  std::filesystem::path base_dir;          // directory of the config file; not serialized

  bool operator==(const ExperimentConfig&) const = default;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  const InterpreterSpec& v_spec() const { return v_interpreter ? *v_interpreter : u_interpreter; }
  std::vector<MlpConfig> grid_configs() const { return expand_grid(grid, classifier); }
};

nlohmann::json to_json(const ExperimentConfig& config);
// Strict: unknown keys and a missing or unsupported version are ConfigErrors.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void write_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path);

// Semantic checks: seeds non-empty, fractions in (0, 1], referenced files
// exist, interpreter specs valid, protocol and seed count compatible.
void validate(const ExperimentConfig& config);

nlohmann::json to_json(const InterpreterSpec& spec);
InterpreterSpec interpreter_spec_from_json(const nlohmann::json& j, const std::string& context);

nlohmann::json to_json(const GridSpec& grid);
GridSpec grid_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AblationPlan& plan);
AblationPlan ablation_plan_from_json(const nlohmann::json& j);

}  // namespace expbert
