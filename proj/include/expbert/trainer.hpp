#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "expbert/evaluation.hpp"
#include "expbert/mlp.hpp"
#include "expbert/representation.hpp"
#include "expbert/run_result.hpp"

namespace expbert {

struct TrainingData {
  FeatureMatrix train;
  FeatureMatrix val;
  FeatureMatrix test;  // may have zero rows
  std::size_t num_classes = 0;
};

struct TrainedModel {
  MlpConfig config;
  Architecture architecture;
  ModelParams<float> params;
};

struct TrainOutput {
  RunResult result;
  TrainedModel model;  // parameters from the best validation epoch
};

// Trains one classifier. All randomness (initialization, epoch shuffles and
// dropout masks) derives from config.seed. Rows are put in order of their
// instance ids before shuffling, so the order the training rows arrive in
// does not affect the result. Throws DivergenceError on a non-finite loss.
TrainOutput train(const MlpConfig& config, const TrainingData& data, const Metric& metric);

// Eval-mode argmax predictions (lowest class id on ties).
std::vector<int> predict(const TrainedModel& model, const Matrix& x);

struct GridCandidate {
  MlpConfig config;  // seed field unused
  std::vector<RunResult> runs;  // one per seed, in seed-list order
  double selection_score = 0.0;  // mean early-stopped validation F1
  bool diverged = false;
};

struct GridSelection {
  std::size_t chosen = 0;
  std::vector<GridCandidate> candidates;
  std::vector<TrainedModel> chosen_models;  // filled when requested, one per seed

  const GridCandidate& best() const { return candidates.at(chosen); }
};

struct GridOptions {
  std::size_t workers = 1;
  bool keep_chosen_models = false;
};

// Trains every config under every seed and picks the best mean early-stopped
// validation F1; ties go to the smaller config hash. Diverged configs are
// never chosen.
GridSelection grid_select(std::span<const MlpConfig> configs, std::span<const std::uint64_t> seeds,
                          const TrainingData& data, const Metric& metric, const GridOptions& options = {});

// <stem>.json holds the config, input layout and tensor shapes; <stem>.expf
// holds all parameters as a single float32 row in the feature-cache format.
void save_checkpoint(const TrainedModel& model, std::span<const Block> layout, const std::filesystem::path& stem);
TrainedModel load_checkpoint(const std::filesystem::path& stem);

}  // namespace expbert
