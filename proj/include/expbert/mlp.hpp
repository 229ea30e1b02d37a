#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "expbert/matrix.hpp"
#include "expbert/representation.hpp"
#include "expbert/rng.hpp"

namespace expbert {

// Classifier hyperparameters. The search grid spans hidden_layers, hidden_dim,
// dropout, project and batch_size; the rest are fixed per experiment.
struct MlpConfig {
  int hidden_layers = 1;  // 0 or 1
  std::size_t hidden_dim = 256;
  double dropout = 0.0;
  bool project = false;  // project each wide input block before concatenation
  std::size_t projection_dim = 64;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 100;
  std::optional<int> patience = 10;  // nullopt: never stop early
  std::uint64_t seed = 0;

  bool operator==(const MlpConfig&) const = default;
};

// Throws ConfigError for out-of-range values.
void validate(const MlpConfig& config);

// Stable hash of every field except the seed.
std::uint64_t config_hash(const MlpConfig& config);
std::string config_hash_hex(const MlpConfig& config);

struct GridSpec {
  std::vector<int> hidden_layers{0, 1};
  std::vector<std::size_t> hidden_dims{64, 256};
  std::vector<double> dropouts{0.0, 0.1, 0.2, 0.3};
  std::vector<bool> project{false, true};
  std::vector<std::size_t> batch_sizes{32, 128};

  bool operator==(const GridSpec&) const = default;
};

// Cartesian product of the grid, each point on top of `base`.
std::vector<MlpConfig> expand_grid(const GridSpec& grid, const MlpConfig& base);

// Shape of the network for one config, input layout and label count.
struct Architecture {
  struct Segment {
    std::size_t offset = 0;      // in the input
    std::size_t length = 0;
    bool projected = false;
    std::size_t out_offset = 0;  // in the classifier features
    std::size_t out_length = 0;
  };

  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::vector<Segment> segments;
  std::size_t feature_dim = 0;  // width after projection
  bool has_hidden = false;
  std::size_t hidden_dim = 0;
  double dropout = 0.0;

  struct TensorShape {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
  };
  // Order: per projected segment (W, b), then hidden (W, b) if present, then output (W, b).
  std::vector<TensorShape> tensor_shapes() const;
  std::size_t projected_count() const;
};

// Blocks longer than projection_dim are projected when config.project is set;
// an empty layout is treated as one block spanning the input.
Architecture make_architecture(const MlpConfig& config, std::span<const Block> layout, std::size_t input_dim,
                               std::size_t num_classes);

template <typename T>
struct ModelParams {
  std::vector<std::vector<T>> tensors;  // shapes from Architecture::tensor_shapes()

  bool operator==(const ModelParams&) const = default;

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (const auto& t : tensors) out.tensors.emplace_back(t.begin(), t.end());
    return out;
  }
  bool all_finite() const;
};

// Weights uniform in +-sqrt(6 / fan_in) ahead of the ReLU and +-sqrt(3 / fan_in)
// for the linear projection and output maps; biases zero.
ModelParams<float> init_params(const Architecture& arch, std::uint64_t seed);

// Inverted-dropout multipliers (0 or 1 / (1 - p)) for one batch.
struct DropoutMasks {
  std::vector<float> input;   // batch x feature_dim
  std::vector<float> hidden;  // batch x hidden_dim
};

DropoutMasks sample_dropout_masks(const Architecture& arch, std::size_t batch, Rng& rng);

// Class scores, one row per input row. Dropout is applied iff masks is non-null.
template <typename T>
BasicMatrix<T> forward(const Architecture& arch, const ModelParams<T>& params, const BasicMatrix<T>& x,
                       const DropoutMasks* masks = nullptr);

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  std::vector<std::vector<T>> grads;  // same shapes as the params
};

// Mean softmax cross-entropy over the batch and its gradient. Throws
// DivergenceError if the loss is not finite.
template <typename T>
LossAndGrad<T> loss_and_grad(const Architecture& arch, const ModelParams<T>& params, const BasicMatrix<T>& x,
                             std::span<const int> labels, const DropoutMasks* masks = nullptr);

template <typename T>
double loss_only(const Architecture& arch, const ModelParams<T>& params, const BasicMatrix<T>& x,
                 std::span<const int> labels, const DropoutMasks* masks = nullptr);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::size_t t = 0;
};

// One bias-corrected Adam update; increments state.t first.
template <typename T>
void adam_step(ModelParams<T>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& state,
               const AdamOptions& options);

}  // namespace expbert
