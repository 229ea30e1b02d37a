#include "expbert/mlp.hpp"

#include <bit>
#include <cmath>

#include "expbert/error.hpp"
#include "expbert/hashing.hpp"

namespace expbert {

void validate(const MlpConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigError("classifier config: " + what); };
  if (c.hidden_layers != 0 && c.hidden_layers != 1) fail("hidden_layers must be 0 or 1");
  if (c.hidden_dim == 0) fail("hidden_dim must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (c.projection_dim == 0) fail("projection_dim must be >= 1");
  if (c.batch_size == 0) fail("batch_size must be >= 1");
  if (!(c.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) fail("betas must be in [0, 1)");
  if (!(c.epsilon > 0.0)) fail("epsilon must be positive");
  if (c.max_epochs < 1) fail("max_epochs must be >= 1");
  if (c.patience && *c.patience < 0) fail("patience must be >= 0");
}

std::uint64_t config_hash(const MlpConfig& c) {
  auto h = fnv1a64("mlp-config-v1");
  h = fnv1a64_u64(static_cast<std::uint64_t>(c.hidden_layers), h);
  h = fnv1a64_u64(c.hidden_dim, h);
  h = fnv1a64_u64(std::bit_cast<std::uint64_t>(c.dropout), h);
  h = fnv1a64_u64(c.project ? 1 : 0, h);
  h = fnv1a64_u64(c.projection_dim, h);
  h = fnv1a64_u64(c.batch_size, h);
  h = fnv1a64_u64(std::bit_cast<std::uint64_t>(c.learning_rate), h);
  h = fnv1a64_u64(std::bit_cast<std::uint64_t>(c.beta1), h);
  h = fnv1a64_u64(std::bit_cast<std::uint64_t>(c.beta2), h);
  h = fnv1a64_u64(std::bit_cast<std::uint64_t>(c.epsilon), h);
  h = fnv1a64_u64(static_cast<std::uint64_t>(c.max_epochs), h);
  h = fnv1a64_u64(c.patience ? static_cast<std::uint64_t>(*c.patience) : ~std::uint64_t{0}, h);
  return h;
}

std::string config_hash_hex(const MlpConfig& config) { return to_hex(config_hash(config)); }

std::vector<MlpConfig> expand_grid(const GridSpec& grid, const MlpConfig& base) {
  std::vector<MlpConfig> out;
  for (int layers : grid.hidden_layers) {
    for (auto dim : grid.hidden_dims) {
      for (double dropout : grid.dropouts) {
        for (bool project : grid.project) {
          for (auto batch : grid.batch_sizes) {
            MlpConfig c = base;
            c.hidden_layers = layers;
            c.hidden_dim = dim;
            c.dropout = dropout;
            c.project = project;
            c.batch_size = batch;
            out.push_back(c);
          }
        }
      }
    }
  }
  return out;
}

std::vector<Architecture::TensorShape> Architecture::tensor_shapes() const {
  std::vector<TensorShape> shapes;
  std::size_t k = 0;
  for (const auto& s : segments) {
    if (!s.projected) continue;
    shapes.push_back({"proj" + std::to_string(k) + ".weight", s.out_length, s.length});
    shapes.push_back({"proj" + std::to_string(k) + ".bias", s.out_length, 1});
    ++k;
  }
  if (has_hidden) {
    shapes.push_back({"hidden.weight", hidden_dim, feature_dim});
    shapes.push_back({"hidden.bias", hidden_dim, 1});
  }
  const auto width = has_hidden ? hidden_dim : feature_dim;
  shapes.push_back({"output.weight", num_classes, width});
  shapes.push_back({"output.bias", num_classes, 1});
  return shapes;
}

std::size_t Architecture::projected_count() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.projected ? 1 : 0;
  return n;
}

Architecture make_architecture(const MlpConfig& config, std::span<const Block> layout, std::size_t input_dim,
                               std::size_t num_classes) {
  validate(config);
  if (input_dim == 0) throw ConfigError("classifier input has zero width");
  if (num_classes < 2) throw ConfigError("classifier needs at least two classes");
  Architecture arch;
  arch.input_dim = input_dim;
  arch.num_classes = num_classes;
  arch.has_hidden = config.hidden_layers == 1;
  arch.hidden_dim = arch.has_hidden ? config.hidden_dim : 0;
  arch.dropout = config.dropout;

  std::vector<Block> blocks(layout.begin(), layout.end());
  if (blocks.empty()) blocks.push_back({"input", 0, input_dim});
  check_layout(blocks, input_dim);
  std::size_t out = 0;
  for (const auto& block : blocks) {
    Architecture::Segment s;
    s.offset = block.offset;
    s.length = block.length;
    s.projected = config.project && block.length > config.projection_dim;
    s.out_offset = out;
    s.out_length = s.projected ? config.projection_dim : block.length;
    out += s.out_length;
    arch.segments.push_back(s);
  }
  arch.feature_dim = out;
  return arch;
}

template <typename T>
bool ModelParams<T>::all_finite() const {
  for (const auto& t : tensors) {
    for (T v : t) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

ModelParams<float> init_params(const Architecture& arch, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams<float> params;
  for (const auto& shape : arch.tensor_shapes()) {
    std::vector<float> t(shape.size(), 0.0f);
    const bool is_weight = shape.name.ends_with(".weight");
    if (is_weight) {
      const double fan_in = static_cast<double>(shape.cols);
      const double gain = shape.name.starts_with("hidden") ? 6.0 : 3.0;
      const double bound = std::sqrt(gain / fan_in);
      for (auto& w : t) w = static_cast<float>(rng.uniform(-bound, bound));
    }
    params.tensors.push_back(std::move(t));
  }
  return params;
}

DropoutMasks sample_dropout_masks(const Architecture& arch, std::size_t batch, Rng& rng) {
  DropoutMasks masks;
  const double keep = 1.0 - arch.dropout;
  const auto scale = static_cast<float>(1.0 / keep);
  auto fill = [&](std::vector<float>& mask, std::size_t n) {
    mask.resize(n);
    for (auto& m : mask) m = rng.uniform() < keep ? scale : 0.0f;
  };
  fill(masks.input, batch * arch.feature_dim);
  fill(masks.hidden, batch * arch.hidden_dim);
  return masks;
}

namespace {

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc{};
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// out (B x rows) = in (B x cols) W^T + b, with W rows x cols.
template <typename T>
void affine(const BasicMatrix<T>& in, const std::vector<T>& w, const std::vector<T>& b, std::size_t rows,
            BasicMatrix<T>& out) {
  out = BasicMatrix<T>(in.rows, rows);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const T* x = in.data.data() + r * in.cols;
    for (std::size_t j = 0; j < rows; ++j) out(r, j) = b[j] + dot(w.data() + j * in.cols, x, in.cols);
  }
}

template <typename T>
struct Activations {
  BasicMatrix<T> features;  // after projection and input dropout
  BasicMatrix<T> pre;       // hidden pre-activation
  BasicMatrix<T> hidden;    // after ReLU and hidden dropout
  BasicMatrix<T> scores;
};

template <typename T>
Activations<T> run_forward(const Architecture& arch, const ModelParams<T>& params, const BasicMatrix<T>& x,
                           const DropoutMasks* masks) {
  if (x.cols != arch.input_dim) {
    throw DataError("classifier input has " + std::to_string(x.cols) + " columns, expected " +
                    std::to_string(arch.input_dim));
  }
  const auto expected = arch.tensor_shapes().size();
  if (params.tensors.size() != expected) throw DataError("parameter tensor count does not match architecture");
  const bool dropout = masks != nullptr && arch.dropout > 0.0;

  Activations<T> act;
  const std::size_t batch = x.rows;
  act.features = BasicMatrix<T>(batch, arch.feature_dim);
  std::size_t t = 0;
  for (const auto& s : arch.segments) {
    if (s.projected) {
      const auto& w = params.tensors[t];
      const auto& b = params.tensors[t + 1];
      t += 2;
      for (std::size_t r = 0; r < batch; ++r) {
        const T* in = x.data.data() + r * x.cols + s.offset;
        for (std::size_t j = 0; j < s.out_length; ++j) {
          act.features(r, s.out_offset + j) = b[j] + dot(w.data() + j * s.length, in, s.length);
        }
      }
    } else {
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t j = 0; j < s.length; ++j) act.features(r, s.out_offset + j) = x(r, s.offset + j);
      }
    }
  }
  if (dropout) {
    for (std::size_t i = 0; i < act.features.data.size(); ++i) act.features.data[i] *= static_cast<T>(masks->input[i]);
  }
  if (arch.has_hidden) {
    affine(act.features, params.tensors[t], params.tensors[t + 1], arch.hidden_dim, act.pre);
    t += 2;
    act.hidden = act.pre;
    for (std::size_t i = 0; i < act.hidden.data.size(); ++i) {
      T v = act.hidden.data[i] > T{} ? act.hidden.data[i] : T{};
      if (dropout) v *= static_cast<T>(masks->hidden[i]);
      act.hidden.data[i] = v;
    }
    affine(act.hidden, params.tensors[t], params.tensors[t + 1], arch.num_classes, act.scores);
  } else {
    affine(act.features, params.tensors[t], params.tensors[t + 1], arch.num_classes, act.scores);
  }
  return act;
}

// Softmax cross-entropy per row; fills d_scores with (softmax - onehot) / batch.
template <typename T>
double softmax_xent(const BasicMatrix<T>& scores, std::span<const int> labels, BasicMatrix<T>* d_scores) {
  if (labels.size() != scores.rows) throw DataError("label count does not match batch size");
  if (d_scores) *d_scores = BasicMatrix<T>(scores.rows, scores.cols);
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(scores.rows);
  std::vector<double> probs(scores.cols);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= scores.cols) throw DataError("label out of range in batch");
    double peak = static_cast<double>(scores(r, 0));
    for (std::size_t c = 1; c < scores.cols; ++c) peak = std::max(peak, static_cast<double>(scores(r, c)));
    double sum = 0.0;
    for (std::size_t c = 0; c < scores.cols; ++c) {
      probs[c] = std::exp(static_cast<double>(scores(r, c)) - peak);
      sum += probs[c];
    }
    total += std::log(sum) + peak - static_cast<double>(scores(r, static_cast<std::size_t>(y)));
    if (d_scores) {
      for (std::size_t c = 0; c < scores.cols; ++c) {
        const double p = probs[c] / sum - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0);
        (*d_scores)(r, c) = static_cast<T>(p * inv_batch);
      }
    }
  }
  const double loss = total * inv_batch;
  if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss");
  return loss;
}

}  // namespace

template <typename T>
BasicMatrix<T> forward(const Architecture& arch, const ModelParams<T>& params, const BasicMatrix<T>& x,
                       const DropoutMasks* masks) {
  return run_forward(arch, params, x, masks).scores;
}

template <typename T>
double loss_only(const Architecture& arch, const ModelParams<T>& params, const BasicMatrix<T>& x,
                 std::span<const int> labels, const DropoutMasks* masks) {
  return softmax_xent<T>(run_forward(arch, params, x, masks).scores, labels, nullptr);
}

template <typename T>
LossAndGrad<T> loss_and_grad(const Architecture& arch, const ModelParams<T>& params, const BasicMatrix<T>& x,
                             std::span<const int> labels, const DropoutMasks* masks) {
  const auto act = run_forward(arch, params, x, masks);
  BasicMatrix<T> d_scores;
  LossAndGrad<T> out;
  out.loss = softmax_xent(act.scores, labels, &d_scores);
  for (const auto& t : params.tensors) out.grads.emplace_back(t.size(), T{});

  const bool dropout = masks != nullptr && arch.dropout > 0.0;
  const std::size_t batch = x.rows;
  const std::size_t out_w = out.grads.size() - 2;
  const BasicMatrix<T>& last = arch.has_hidden ? act.hidden : act.features;

  // Output layer.
  auto& g_w = out.grads[out_w];
  auto& g_b = out.grads[out_w + 1];
  const auto& w_out = params.tensors[out_w];
  BasicMatrix<T> d_last(batch, last.cols);
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t c = 0; c < arch.num_classes; ++c) {
      const T d = d_scores(r, c);
      g_b[c] += d;
      axpy(d, last.data.data() + r * last.cols, g_w.data() + c * last.cols, last.cols);
      axpy(d, w_out.data() + c * last.cols, d_last.data.data() + r * last.cols, last.cols);
    }
  }

  BasicMatrix<T> d_features;
  if (arch.has_hidden) {
    const std::size_t hw = out_w - 2;
    // Through hidden dropout and ReLU.
    for (std::size_t i = 0; i < d_last.data.size(); ++i) {
      T d = act.pre.data[i] > T{} ? d_last.data[i] : T{};
      if (dropout) d *= static_cast<T>(masks->hidden[i]);
      d_last.data[i] = d;
    }
    auto& gh_w = out.grads[hw];
    auto& gh_b = out.grads[hw + 1];
    const auto& w_hidden = params.tensors[hw];
    d_features = BasicMatrix<T>(batch, arch.feature_dim);
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t j = 0; j < arch.hidden_dim; ++j) {
        const T d = d_last(r, j);
        if (d == T{}) continue;
        gh_b[j] += d;
        axpy(d, act.features.data.data() + r * arch.feature_dim, gh_w.data() + j * arch.feature_dim, arch.feature_dim);
        axpy(d, w_hidden.data() + j * arch.feature_dim, d_features.data.data() + r * arch.feature_dim,
             arch.feature_dim);
      }
    }
  } else {
    d_features = std::move(d_last);
  }

  if (arch.projected_count() == 0) return out;
  if (dropout) {
    for (std::size_t i = 0; i < d_features.data.size(); ++i) d_features.data[i] *= static_cast<T>(masks->input[i]);
  }
  std::size_t t = 0;
  for (const auto& s : arch.segments) {
    if (!s.projected) continue;
    auto& gp_w = out.grads[t];
    auto& gp_b = out.grads[t + 1];
    t += 2;
    for (std::size_t r = 0; r < batch; ++r) {
      const T* in = x.data.data() + r * x.cols + s.offset;
      for (std::size_t j = 0; j < s.out_length; ++j) {
        const T d = d_features(r, s.out_offset + j);
        gp_b[j] += d;
        axpy(d, in, gp_w.data() + j * s.length, s.length);
      }
    }
  }
  return out;
}

template <typename T>
void adam_step(ModelParams<T>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& state,
               const AdamOptions& options) {
  if (grads.size() != params.tensors.size()) throw DataError("gradient tensor count does not match parameters");
  if (state.m.empty()) {
    for (const auto& p : params.tensors) {
      state.m.emplace_back(p.size(), T{});
      state.v.emplace_back(p.size(), T{});
    }
  }
  if (state.m.size() != params.tensors.size()) throw DataError("optimizer state does not match parameters");
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t k = 0; k < params.tensors.size(); ++k) {
    auto& p = params.tensors[k];
    const auto& g = grads[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (g.size() != p.size() || m.size() != p.size()) throw DataError("gradient shape does not match parameter");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = options.beta1 * static_cast<double>(m[i]) + (1.0 - options.beta1) * gi;
      const double vi = options.beta2 * static_cast<double>(v[i]) + (1.0 - options.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double step = options.learning_rate * (mi / correction1) / (std::sqrt(vi / correction2) + options.epsilon);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - step);
    }
  }
}

#define EXPBERT_INSTANTIATE(T)                                                                                     \
  template struct ModelParams<T>;                                                                                  \
  template BasicMatrix<T> forward(const Architecture&, const ModelParams<T>&, const BasicMatrix<T>&,               \
                                  const DropoutMasks*);                                                            \
  template LossAndGrad<T> loss_and_grad(const Architecture&, const ModelParams<T>&, const BasicMatrix<T>&,         \
                                        std::span<const int>, const DropoutMasks*);                                \
  template double loss_only(const Architecture&, const ModelParams<T>&, const BasicMatrix<T>&, std::span<const int>, \
                            const DropoutMasks*);                                                                  \
  template void adam_step(ModelParams<T>&, const std::vector<std::vector<T>>&, AdamState<T>&, const AdamOptions&);

EXPBERT_INSTANTIATE(float)
EXPBERT_INSTANTIATE(double)

#undef EXPBERT_INSTANTIATE

}  // namespace expbert
