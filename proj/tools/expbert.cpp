// expbert: featurize, train, sweep, ablate, random-explanations, report.

#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "expbert/experiment.hpp"

namespace {

struct Flags {
  std::string config;
  std::size_t workers = 0;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::vector<double> fractions;
};

void add_flags(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config, "Experiment config (JSON)")->required();
  cmd->add_option("--workers", flags.workers, "Parallel runs / request batches (overrides the config)");
  cmd->add_option("--out", flags.out, "Output directory (overrides the config)");
  cmd->add_option("--seed-list", flags.seeds, "Comma-separated seeds (overrides the config)")->delimiter(',');
  cmd->add_option("--fractions", flags.fractions, "Comma-separated training fractions (overrides the config)")
      ->delimiter(',');
}

expbert::ExperimentConfig load(const Flags& flags) {
  auto config = expbert::load_experiment_config(flags.config);
  if (flags.workers > 0) config.workers = flags.workers;
  if (!flags.out.empty()) config.output_dir = std::filesystem::absolute(flags.out).string();
  if (!flags.seeds.empty()) config.seeds = flags.seeds;
  if (!flags.fractions.empty()) config.fractions = flags.fractions;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation-guided relation extraction experiments"};
  app.require_subcommand(1);
  Flags flags;
  auto* featurize = app.add_subcommand("featurize", "Interpret all texts and fill the feature caches");
  auto* train = app.add_subcommand("train", "Grid-search, train and evaluate under the configured protocol");
  auto* sweep = app.add_subcommand("sweep", "Train on nested fractions of the training split");
  auto* ablate = app.add_subcommand("ablate", "Run the config's ablation plan");
  auto* random = app.add_subcommand("random-explanations", "Write a randomized explanation file");
  auto* report = app.add_subcommand("report", "Print collected results as a tab-separated table");
  for (auto* cmd : {featurize, train, sweep, ablate, random, report}) add_flags(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? expbert::kExitOk : expbert::kExitConfig;
  }

  try {
    const auto config = load(flags);
    if (featurize->parsed()) {
      expbert::cmd_featurize(config, std::cout);
    } else if (train->parsed()) {
      expbert::cmd_train(config, std::cout);
    } else if (sweep->parsed()) {
      expbert::cmd_sweep(config, std::cout);
    } else if (ablate->parsed()) {
      expbert::cmd_ablate(config, std::cout);
    } else if (random->parsed()) {
      expbert::cmd_random_explanations(config, {}, std::cout);
    } else if (report->parsed()) {
      expbert::cmd_report(config, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return expbert::exit_code_for_current_exception();
  }
  return expbert::kExitOk;
}
