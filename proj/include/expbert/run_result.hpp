#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace expbert {

// Outcome of one training run. early_stopped_val_f1 is the maximum of
// val_f1_curve and test_f1 is measured with the parameters of best_epoch.
struct RunResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  int best_epoch = 0;  // 1-based
  int epochs_run = 0;
  std::vector<double> val_f1_curve;
  std::vector<double> train_loss_curve;
  double early_stopped_val_f1 = 0.0;
  double test_f1 = 0.0;

  bool operator==(const RunResult&) const = default;
};

}  // namespace expbert
