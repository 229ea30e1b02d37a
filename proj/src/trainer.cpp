#include "expbert/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "expbert/error.hpp"
#include "expbert/feature_cache.hpp"
#include "expbert/json_io.hpp"
#include "expbert/parallel.hpp"

namespace expbert {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kDropoutStream = 3;
constexpr std::size_t kPredictChunk = 1024;

void check_split(const FeatureMatrix& m, std::size_t cols, const char* name, bool need_labels) {
  if (m.x.rows != m.labels.size() || m.x.rows != m.ids.size()) {
    throw DataError(std::string(name) + " split: rows, labels and ids disagree");
  }
  if (m.x.rows > 0 && m.x.cols != cols) {
    throw DataError(std::string(name) + " split has " + std::to_string(m.x.cols) + " columns, expected " +
                    std::to_string(cols));
  }
  if (need_labels) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      if (m.labels[i] < 0) throw DataError(std::string(name) + " instance " + m.ids[i] + " has no gold label");
    }
  }
}

bool fully_labelled(const FeatureMatrix& m) {
  return std::all_of(m.labels.begin(), m.labels.end(), [](int l) { return l >= 0; });
}

std::vector<int> predict_with(const Architecture& arch, const ModelParams<float>& params, const Matrix& x) {
  std::vector<int> out;
  out.reserve(x.rows);
  for (std::size_t start = 0; start < x.rows; start += kPredictChunk) {
    const std::size_t n = std::min(kPredictChunk, x.rows - start);
    Matrix chunk(n, x.cols);
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(start * x.cols), n * x.cols, chunk.data.begin());
    const Matrix scores = forward(arch, params, chunk);
    for (std::size_t r = 0; r < n; ++r) {
      const auto row = scores.row(r);
      out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

}  // namespace

TrainOutput train(const MlpConfig& config, const TrainingData& data, const Metric& metric) {
  validate(config);
  if (data.num_classes < 2) throw ConfigError("training needs at least two classes");
  const std::size_t cols = data.train.x.cols;
  if (data.train.x.rows == 0) throw DataError("training split is empty");
  if (data.val.x.rows == 0) throw DataError("validation split is empty");
  check_split(data.train, cols, "train", true);
  check_split(data.val, cols, "val", true);
  check_split(data.test, cols, "test", false);
  for (int l : data.train.labels) {
    if (static_cast<std::size_t>(l) >= data.num_classes) throw DataError("training label out of range");
  }

  const Architecture arch = make_architecture(config, data.train.layout, cols, data.num_classes);
  ModelParams<float> params = init_params(arch, derive_seed(config.seed, kInitStream));
  AdamState<float> adam;
  const AdamOptions adam_options{config.learning_rate, config.beta1, config.beta2, config.epsilon};
  Rng shuffle_rng(derive_seed(config.seed, kShuffleStream));
  Rng dropout_rng(derive_seed(config.seed, kDropoutStream));

  std::vector<std::size_t> order(data.train.x.rows);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return data.train.ids[a] < data.train.ids[b]; });

  RunResult result;
  result.config_hash = config_hash_hex(config);
  result.seed = config.seed;
  ModelParams<float> best = params;
  double best_f1 = -1.0;
  int since_best = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<std::size_t> perm = order;
    shuffle_rng.shuffle(perm);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, perm.size() - start);
      Matrix xb(n, cols);
      std::vector<int> yb(n);
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t src = perm[start + r];
        std::copy_n(data.train.x.row(src).begin(), cols, xb.row(r).begin());
        yb[r] = data.train.labels[src];
      }
      std::optional<DropoutMasks> masks;
      if (arch.dropout > 0.0) masks = sample_dropout_masks(arch, n, dropout_rng);
      auto lg = loss_and_grad(arch, params, xb, yb, masks ? &*masks : nullptr);
      adam_step(params, lg.grads, adam, adam_options);
      loss_sum += lg.loss * static_cast<double>(n);
    }
    if (!params.all_finite()) {
      throw DivergenceError("parameters became non-finite in epoch " + std::to_string(epoch) + " (config " +
                            result.config_hash + ", seed " + std::to_string(config.seed) + ")");
    }
    result.train_loss_curve.push_back(loss_sum / static_cast<double>(perm.size()));
    const double f1 = metric(predict_with(arch, params, data.val.x), data.val.labels);
    result.val_f1_curve.push_back(f1);
    result.epochs_run = epoch;
    if (f1 > best_f1) {
      best_f1 = f1;
      best = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (config.patience && ++since_best > *config.patience) {
      break;
    }
  }

  result.early_stopped_val_f1 = best_f1;
  if (data.test.x.rows > 0 && fully_labelled(data.test)) {
    result.test_f1 = metric(predict_with(arch, best, data.test.x), data.test.labels);
  }
  return {std::move(result), TrainedModel{config, arch, std::move(best)}};
}

std::vector<int> predict(const TrainedModel& model, const Matrix& x) {
  if (x.rows > 0 && x.cols != model.architecture.input_dim) {
    throw DataError("input has " + std::to_string(x.cols) + " columns, model expects " +
                    std::to_string(model.architecture.input_dim));
  }
  return predict_with(model.architecture, model.params, x);
}

GridSelection grid_select(std::span<const MlpConfig> configs, std::span<const std::uint64_t> seeds,
                          const TrainingData& data, const Metric& metric, const GridOptions& options) {
  if (configs.empty()) throw ConfigError("grid is empty");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  GridSelection selection;
  selection.candidates.resize(configs.size());
  std::vector<std::optional<RunResult>> slots(configs.size() * seeds.size());
  std::vector<char> diverged(slots.size(), 0);

  parallel_for(slots.size(), options.workers, [&](std::size_t task) {
    MlpConfig config = configs[task / seeds.size()];
    config.seed = seeds[task % seeds.size()];
    try {
      slots[task] = train(config, data, metric).result;
    } catch (const DivergenceError&) {
      diverged[task] = 1;
    }
  });

  std::optional<std::size_t> chosen;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    auto& cand = selection.candidates[c];
    cand.config = configs[c];
    double sum = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const std::size_t task = c * seeds.size() + s;
      if (diverged[task]) {
        cand.diverged = true;
        continue;
      }
      sum += slots[task]->early_stopped_val_f1;
      cand.runs.push_back(std::move(*slots[task]));
    }
    if (cand.diverged) continue;
    cand.selection_score = sum / static_cast<double>(seeds.size());
    if (!chosen) {
      chosen = c;
      continue;
    }
    const auto& incumbent = selection.candidates[*chosen];
    if (cand.selection_score > incumbent.selection_score ||
        (cand.selection_score == incumbent.selection_score && config_hash(cand.config) < config_hash(incumbent.config))) {
      chosen = c;
    }
  }
  if (!chosen) throw DivergenceError("every configuration in the grid diverged");
  selection.chosen = *chosen;

  if (options.keep_chosen_models) {
    // Training is deterministic, so retraining reproduces the selected runs.
    selection.chosen_models.resize(seeds.size());
    parallel_for(seeds.size(), options.workers, [&](std::size_t s) {
      MlpConfig config = configs[*chosen];
      config.seed = seeds[s];
      selection.chosen_models[s] = train(config, data, metric).model;
    });
  }
  return selection;
}

void save_checkpoint(const TrainedModel& model, std::span<const Block> layout, const std::filesystem::path& stem) {
  const auto shapes = model.architecture.tensor_shapes();
  if (shapes.size() != model.params.tensors.size()) throw DataError("checkpoint: parameter count mismatch");
  nlohmann::json shape_json = nlohmann::json::array();
  std::size_t total = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].size() != model.params.tensors[i].size()) throw DataError("checkpoint: tensor size mismatch");
    shape_json.push_back({{"name", shapes[i].name}, {"rows", shapes[i].rows}, {"cols", shapes[i].cols}});
    total += shapes[i].size();
  }
  nlohmann::json meta = {{"config", to_json(model.config)},
                         {"input_dim", model.architecture.input_dim},
                         {"num_classes", model.architecture.num_classes},
                         {"layout", to_json(layout)},
                         {"tensors", shape_json}};
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  auto json_path = stem;
  json_path += ".json";
  std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
  out << meta.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + json_path.string());

  Matrix flat(1, total);
  std::size_t at = 0;
  for (const auto& t : model.params.tensors) {
    std::copy(t.begin(), t.end(), flat.data.begin() + static_cast<std::ptrdiff_t>(at));
    at += t.size();
  }
  auto data_path = stem;
  data_path += ".expf";
  const std::string id = "params";
  write_matrix_cache(data_path, flat, std::span<const std::string>(&id, 1), config_hash_hex(model.config));
}

TrainedModel load_checkpoint(const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  std::ifstream in(json_path, std::ios::binary);
  if (!in) throw DataError("checkpoint not found: " + json_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + json_path.string() + ": " + e.what());
  }
  TrainedModel model;
  try {
    model.config = mlp_config_from_json(meta.at("config"));
    const auto layout = layout_from_json(meta.at("layout"));
    model.architecture = make_architecture(model.config, layout, meta.at("input_dim").get<std::size_t>(),
                                           meta.at("num_classes").get<std::size_t>());
    const auto shapes = model.architecture.tensor_shapes();
    const auto& stored = meta.at("tensors");
    if (stored.size() != shapes.size()) throw DataError("checkpoint tensor list does not match the architecture");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (stored[i].at("name").get<std::string>() != shapes[i].name ||
          stored[i].at("rows").get<std::size_t>() != shapes[i].rows ||
          stored[i].at("cols").get<std::size_t>() != shapes[i].cols) {
        throw DataError("checkpoint tensor " + std::to_string(i) + " does not match the architecture");
      }
    }
    auto data_path = stem;
    data_path += ".expf";
    const Matrix flat = read_matrix_cache(data_path);
    std::size_t total = 0;
    for (const auto& s : shapes) total += s.size();
    if (flat.rows != 1 || flat.cols != total) throw DataError("checkpoint parameter file has the wrong size");
    std::size_t at = 0;
    for (const auto& s : shapes) {
      auto begin = flat.data.begin() + static_cast<std::ptrdiff_t>(at);
      model.params.tensors.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(s.size()));
      at += s.size();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + json_path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace expbert
