#include "lbkt/model.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

#include "lbkt/error.hpp"
#include "lbkt/loss.hpp"
#include "lbkt/parallel.hpp"
#include "lbkt/random.hpp"

namespace lbkt {

std::string_view display_name(Variant v) {
  switch (v) {
    case Variant::lbkt: return "LBKT";
    case Variant::lbkt_no_rasch: return "LBKT-Rasch";
    case Variant::lbkt_no_lstm: return "LBKT-LSTM";
    case Variant::bert: return "BERT";
  }
  return "?";
}

std::string_view cli_name(Variant v) {
  switch (v) {
    case Variant::lbkt: return "lbkt";
    case Variant::lbkt_no_rasch: return "lbkt-no-rasch";
    case Variant::lbkt_no_lstm: return "lbkt-no-lstm";
    case Variant::bert: return "bert";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (const Variant v : kAllVariants) {
    if (name == cli_name(v) || name == display_name(v)) return v;
  }
  throw ConfigError("model.variant", "unknown variant '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  encoder.validate();
  if (num_questions < 1) throw ConfigError("model.num_questions", "must be positive");
  if (num_buckets < 2) throw ConfigError("model.num_buckets", "must be at least 2");
  if (lstm_hidden < 1) throw ConfigError("model.lstm_hidden", "must be positive");
  if (max_positions < 1) throw ConfigError("model.max_positions", "must be positive");
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& cfg) {
  const int d = cfg.encoder.d_model;
  ModelParams p;
  p.embedding.question.setZero(cfg.num_questions + 2, d);
  if (cfg.use_rasch()) p.embedding.difficulty.setZero(cfg.num_buckets, d);
  p.embedding.response.setZero(kNumResponseTokens, d);
  p.layers.assign(static_cast<std::size_t>(cfg.encoder.num_layers), EncoderLayerParams<T>::zeros(cfg.encoder));
  if (cfg.use_lstm()) p.lstm = LstmParams<T>::zeros(d, cfg.lstm_hidden);
  p.head = OutputProjection<T>::zeros(cfg.use_lstm() ? cfg.lstm_hidden : d);
  return p;
}

template <typename T>
std::vector<std::pair<std::string, Matrix<T>*>> ModelParams<T>::tensors() {
  std::vector<std::pair<std::string, Matrix<T>*>> out;
  visit([&](const std::string& name, Matrix<T>& m) { out.emplace_back(name, &m); });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Matrix<T>*>> ModelParams<T>::tensors() const {
  std::vector<std::pair<std::string, const Matrix<T>*>> out;
  visit([&](const std::string& name, const Matrix<T>& m) { out.emplace_back(name, &m); });
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename T>
void ModelParams<T>::set_zero() {
  visit([](const std::string&, Matrix<T>& m) { m.setZero(); });
}

template <typename T>
void ModelParams<T>::add(const ModelParams& other) {
  auto mine = tensors();
  const auto theirs = other.tensors();
  if (mine.size() != theirs.size()) throw std::invalid_argument("parameter sets differ in structure");
  for (std::size_t i = 0; i < mine.size(); ++i) *mine[i].second += *theirs[i].second;
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.embedding.question = embedding.question.template cast<U>();
  out.embedding.difficulty = embedding.difficulty.template cast<U>();
  out.embedding.response = embedding.response.template cast<U>();
  out.layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<Matrix<U>*> dst_list;
    EncoderLayerParams<U>::visit(out.layers[l], [&](const char*, Matrix<U>& m) { dst_list.push_back(&m); });
    std::size_t i = 0;
    EncoderLayerParams<T>::visit(layers[l], [&](const char*, const Matrix<T>& m) { *dst_list[i++] = m.template cast<U>(); });
  }
  {
    std::vector<Matrix<U>*> dst_list;
    LstmParams<U>::visit(out.lstm, [&](const char*, Matrix<U>& m) { dst_list.push_back(&m); });
    std::size_t i = 0;
    LstmParams<T>::visit(lstm, [&](const char*, const Matrix<T>& m) { *dst_list[i++] = m.template cast<U>(); });
  }
  out.head.w = head.w.template cast<U>();
  out.head.b = head.b.template cast<U>();
  return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams<T> p = ModelParams<T>::zeros(cfg);
  Rng rng(mix_seed(cfg.init_seed, 0x1A17));
  const auto gaussian = [&](Matrix<T>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(0.02 * rng.normal());
  };
  gaussian(p.embedding.question);
  p.embedding.question.row(cfg.pad_question()).setZero();
  p.embedding.question.row(cfg.oov_question()).setZero();
  if (p.embedding.difficulty.size()) gaussian(p.embedding.difficulty);
  gaussian(p.embedding.response);
  for (auto& layer : p.layers) {
    for (Matrix<T>* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.w1, &layer.w2}) gaussian(*w);
    layer.ln1_gain.setOnes();
    layer.ln2_gain.setOnes();
  }
  if (!p.lstm.empty()) {
    for (Matrix<T>* w : {&p.lstm.w_i, &p.lstm.w_f, &p.lstm.w_g, &p.lstm.w_o}) gaussian(*w);
  }
  gaussian(p.head.w);
  return p;
}

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.encoder.d_model);
  const auto f = static_cast<std::size_t>(cfg.encoder.d_ff);
  const auto h = static_cast<std::size_t>(cfg.lstm_hidden);
  std::size_t n = (static_cast<std::size_t>(cfg.num_questions) + 2) * d + kNumResponseTokens * d;
  if (cfg.use_rasch()) n += static_cast<std::size_t>(cfg.num_buckets) * d;
  const std::size_t per_layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d;
  n += static_cast<std::size_t>(cfg.encoder.num_layers) * per_layer;
  if (cfg.use_lstm()) n += 4 * ((d + h) * h + h);
  n += (cfg.use_lstm() ? h : d) + 1;
  return n;
}

template <typename T>
Model<T>::Model(ModelConfig config, ModelParams<T> params)
    : config_(std::move(config)),
      params_(std::move(params)),
      positional_(positional_encoding<T>(config_.max_positions, config_.encoder.d_model)) {
  config_.validate();
  const ModelParams<T> reference = ModelParams<T>::zeros(config_);
  const auto expected = reference.tensors();
  const auto actual = std::as_const(params_).tensors();
  if (expected.size() != actual.size()) throw Error("parameter set does not match the model configuration");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i].first != actual[i].first || expected[i].second->rows() != actual[i].second->rows() ||
        expected[i].second->cols() != actual[i].second->cols()) {
      throw Error("parameter '" + actual[i].first + "' does not match the model configuration");
    }
  }
}

namespace {

template <typename T>
struct SampleCache {
  EncoderCache<T> encoder;
  LstmCache<T> lstm;
  Matrix<T> head_input;

  std::size_t bytes() const {
    return encoder.bytes() + lstm.bytes() + static_cast<std::size_t>(head_input.size()) * sizeof(T);
  }
};

// Logits for the query rows of batch row b: [extent, 1] in full mode,
// [1, 1] in last_query mode.
template <typename T>
Matrix<T> sample_forward(const WindowedBatch& batch, int b, int extent, const Model<T>& model, AttentionMode mode,
                         Rng* rng, SampleCache<T>* cache) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  const auto valid = batch.valid_row(b).first(static_cast<std::size_t>(extent));
  const Matrix<T> x = compose_sequence(batch, b, extent, p.embedding, model.positional(), cfg.use_rasch());
  const Dropout dropout{rng ? cfg.encoder.dropout : 0.0, rng};
  Matrix<T> encoded =
      encode_sequence<T>(x, valid, cfg.encoder, p.layers, mode, dropout, cache ? &cache->encoder : nullptr);
  if (cfg.use_lstm()) {
    static constexpr std::uint8_t kOne[1] = {1};
    const std::span<const std::uint8_t> lstm_valid =
        mode == AttentionMode::full ? valid : std::span<const std::uint8_t>(kOne, 1);
    encoded = lstm_sequence<T>(encoded, lstm_valid, p.lstm, cache ? &cache->lstm : nullptr);
  }
  Matrix<T> logits = project_sequence<T>(encoded, p.head);
  if (cache) cache->head_input = std::move(encoded);
  return logits;
}

template <typename T>
void sample_backward(const WindowedBatch& batch, int b, const Matrix<T>& dlogits, const Model<T>& model,
                     const SampleCache<T>& cache, ModelParams<T>& grads) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  grads.head.w.noalias() += cache.head_input.transpose() * dlogits;
  grads.head.b(0, 0) += dlogits.sum();
  Matrix<T> dstate = dlogits * p.head.w.transpose();
  if (cfg.use_lstm()) dstate = lstm_sequence_backward<T>(dstate, cache.lstm, p.lstm, grads.lstm);
  const Matrix<T> dx = encode_sequence_backward<T>(dstate, cache.encoder, cfg.encoder, p.layers, grads.layers);
  compose_sequence_backward<T>(batch, b, dx, p.embedding, cfg.use_rasch(), grads.embedding);
}

std::size_t scored_positions(const WindowedBatch& batch, AttentionMode mode) {
  if (mode == AttentionMode::full) return batch.valid_count();
  std::size_t n = 0;
  for (int b = 0; b < batch.batch; ++b) n += batch.valid_extent(b) > 0 ? 1 : 0;
  return n;
}

Rng row_rng(const DropoutSpec& spec, int row) {
  return Rng(mix_seed(mix_seed(spec.seed, spec.step), static_cast<std::uint64_t>(row)));
}

// Gradients are summed into a fixed number of shards (row b goes to shard
// b mod kShards) and the shards are reduced in order, so the result does
// not depend on the worker count.
constexpr int kShards = 8;

template <typename T>
LossAndCount loss_impl(const WindowedBatch& batch, const Model<T>& model, AttentionMode mode,
                       const DropoutSpec& dropout, ModelParams<T>* grads, int threads) {
  const std::size_t total = scored_positions(batch, mode);
  if (total == 0) throw Error("batch has no valid positions");
  const T inv_total = T(1) / static_cast<T>(total);
  const int shards = std::min(kShards, std::max(batch.batch, 1));
  std::vector<ModelParams<T>> shard_grads;
  if (grads) shard_grads.assign(static_cast<std::size_t>(shards), ModelParams<T>::zeros(model.config()));
  std::vector<double> shard_loss(static_cast<std::size_t>(shards), 0.0);

  parallel_for(shards, threads, [&](int s) {
    SampleCache<T> cache;
    for (int b = s; b < batch.batch; b += shards) {
      const int extent = batch.valid_extent(b);
      if (extent == 0) continue;
      Rng rng = row_rng(dropout, b);
      const Matrix<T> logits =
          sample_forward(batch, b, extent, model, mode, dropout.enabled ? &rng : nullptr, grads ? &cache : nullptr);
      Matrix<T> dlogits = Matrix<T>::Zero(logits.rows(), 1);
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const int t = mode == AttentionMode::full ? static_cast<int>(r) : extent - 1;
        const std::size_t o = batch.offset(b, t);
        if (!batch.valid_mask[o]) continue;
        const double z = static_cast<double>(logits(r, 0));
        const double y = batch.labels[o];
        shard_loss[static_cast<std::size_t>(s)] += bce_term(z, y);
        dlogits(r, 0) = static_cast<T>(sigmoid(z) - y) * inv_total;
      }
      if (grads) sample_backward(batch, b, dlogits, model, cache, shard_grads[static_cast<std::size_t>(s)]);
    }
  });

  LossAndCount out;
  out.count = total;
  for (int s = 0; s < shards; ++s) {
    out.loss_sum += shard_loss[static_cast<std::size_t>(s)];
    if (grads) grads->add(shard_grads[static_cast<std::size_t>(s)]);
  }
  return out;
}

}  // namespace

template <typename T>
Matrix<T> model_forward(const WindowedBatch& batch, const Model<T>& model, AttentionMode mode,
                        const DropoutSpec& dropout, int threads) {
  Matrix<T> logits = Matrix<T>::Zero(batch.batch, mode == AttentionMode::full ? batch.length : 1);
  parallel_for(batch.batch, threads, [&](int b) {
    const int extent = batch.valid_extent(b);
    if (extent == 0) return;
    Rng rng = row_rng(dropout, b);
    const Matrix<T> row = sample_forward<T>(batch, b, extent, model, mode, dropout.enabled ? &rng : nullptr, nullptr);
    if (mode == AttentionMode::full) {
      for (int t = 0; t < extent; ++t) {
        if (batch.valid_mask[batch.offset(b, t)]) logits(b, t) = row(t, 0);
      }
    } else {
      logits(b, 0) = row(0, 0);
    }
  });
  return logits;
}

template <typename T>
LossAndCount model_loss_and_grad(const WindowedBatch& batch, const Model<T>& model, AttentionMode mode,
                                 const DropoutSpec& dropout, ModelParams<T>& grads, int threads) {
  return loss_impl(batch, model, mode, dropout, &grads, threads);
}

template <typename T>
LossAndCount model_loss(const WindowedBatch& batch, const Model<T>& model, AttentionMode mode, int threads) {
  return loss_impl<T>(batch, model, mode, DropoutSpec{}, nullptr, threads);
}

std::size_t activation_bytes_per_sequence(const ModelConfig& cfg, int length, AttentionMode mode, bool dropout,
                                          std::size_t scalar_bytes) {
  const auto n = static_cast<std::size_t>(length);
  const auto d = static_cast<std::size_t>(cfg.encoder.d_model);
  const auto f = static_cast<std::size_t>(cfg.encoder.d_ff);
  const auto heads = static_cast<std::size_t>(cfg.encoder.num_heads);
  const auto layers = static_cast<std::size_t>(cfg.encoder.num_layers);
  std::size_t scalars = 0;
  std::size_t rows = n;  // rows leaving the encoder
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t m = (mode == AttentionMode::last_query && l + 1 == layers) ? 1 : n;
    // input, k, v over all rows; q, context, ln1_hat, h1, ln2_hat over query rows
    scalars += 3 * n * d + 5 * m * d;
    scalars += heads * m * n;       // attention weights
    scalars += 2 * m * f + 2 * m;   // ffn pre/post activation, two rstd columns
    if (dropout) scalars += heads * m * n + 2 * m * d;
    rows = m;
  }
  if (layers == 0 && mode == AttentionMode::last_query) rows = 1;
  std::size_t extra_bytes = 0;
  if (cfg.use_lstm()) {
    const auto h = static_cast<std::size_t>(cfg.lstm_hidden);
    scalars += rows * d + 6 * rows * h;
    extra_bytes += rows;  // validity bytes
    scalars += rows * h;  // head input
  } else {
    scalars += rows * d;
  }
  return scalars * scalar_bytes + extra_bytes;
}

template <typename T>
std::size_t measured_activation_bytes(const WindowedBatch& batch, int row, const Model<T>& model, AttentionMode mode,
                                      bool dropout) {
  SampleCache<T> cache;
  Rng rng(1);
  const int extent = batch.valid_extent(row);
  if (extent == 0) throw Error("row has no valid positions");
  sample_forward<T>(batch, row, extent, model, mode, dropout ? &rng : nullptr, &cache);
  return cache.bytes();
}

#define LBKT_INSTANTIATE(T)                                                                                       \
  template struct ModelParams<T>;                                                                                 \
  template ModelParams<T> init_params<T>(const ModelConfig&);                                                     \
  template class Model<T>;                                                                                        \
  template Matrix<T> model_forward<T>(const WindowedBatch&, const Model<T>&, AttentionMode, const DropoutSpec&,   \
                                      int);                                                                       \
  template LossAndCount model_loss_and_grad<T>(const WindowedBatch&, const Model<T>&, AttentionMode,              \
                                               const DropoutSpec&, ModelParams<T>&, int);                         \
  template LossAndCount model_loss<T>(const WindowedBatch&, const Model<T>&, AttentionMode, int);                 \
  template std::size_t measured_activation_bytes<T>(const WindowedBatch&, int, const Model<T>&, AttentionMode,    \
                                                    bool);
LBKT_INSTANTIATE(float)
LBKT_INSTANTIATE(double)
#undef LBKT_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace lbkt
