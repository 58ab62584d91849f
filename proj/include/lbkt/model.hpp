#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lbkt/dataset.hpp"
#include "lbkt/embedding.hpp"
#include "lbkt/encoder.hpp"
#include "lbkt/sequence_head.hpp"

namespace lbkt {

/// Ablation variants. LBKT-Rasch drops the Rasch term, LBKT-LSTM drops the
/// LSTM block, BERT drops both.
enum class Variant { lbkt, lbkt_no_rasch, lbkt_no_lstm, bert };

/// Display name: "LBKT", "LBKT-Rasch", "LBKT-LSTM", "BERT".
std::string_view display_name(Variant v);
/// Command-line name: "lbkt", "lbkt-no-rasch", "lbkt-no-lstm", "bert".
std::string_view cli_name(Variant v);
Variant parse_variant(std::string_view name);
inline constexpr Variant kAllVariants[] = {Variant::lbkt, Variant::lbkt_no_rasch, Variant::lbkt_no_lstm, Variant::bert};

struct ModelConfig {
  EncoderConfig encoder;
  int num_questions = 0;  // Q; tables hold Q + 2 rows
  int num_buckets = 10;
  int lstm_hidden = 128;
  int max_positions = 512;
  Variant variant = Variant::lbkt;
  std::uint64_t init_seed = 1;

  bool use_rasch() const { return variant == Variant::lbkt || variant == Variant::lbkt_no_lstm; }
  bool use_lstm() const { return variant == Variant::lbkt || variant == Variant::lbkt_no_rasch; }
  int pad_question() const { return num_questions; }
  int oov_question() const { return num_questions + 1; }
  void validate() const;
};

template <typename T>
struct ModelParams {
  EmbeddingParams<T> embedding;
  std::vector<EncoderLayerParams<T>> layers;
  LstmParams<T> lstm;
  OutputProjection<T> head;

  /// Correctly shaped zero tensors for `cfg` (variant decides which exist).
  static ModelParams zeros(const ModelConfig& cfg);

  /// Visits every tensor in a fixed order with its dotted name.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  /// Named tensor pointers in visit order.
  std::vector<std::pair<std::string, Matrix<T>*>> tensors();
  std::vector<std::pair<std::string, const Matrix<T>*>> tensors() const;

  std::size_t parameter_count() const;
  void set_zero();
  /// this += other, tensor by tensor.
  void add(const ModelParams& other);

  template <typename U>
  ModelParams<U> cast() const;

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& p, F& f) {
    f(std::string("embedding.question"), p.embedding.question);
    if (p.embedding.difficulty.size()) f(std::string("embedding.difficulty"), p.embedding.difficulty);
    f(std::string("embedding.response"), p.embedding.response);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const std::string prefix = "encoder." + std::to_string(l) + ".";
      EncoderLayerParams<T>::visit(p.layers[l], [&](const char* name, auto& m) { f(prefix + name, m); });
    }
    if (!p.lstm.empty()) {
      LstmParams<T>::visit(p.lstm, [&](const char* name, auto& m) { f(std::string("lstm.") + name, m); });
    }
    f(std::string("head.w"), p.head.w);
    f(std::string("head.b"), p.head.b);
  }
};

/// Gaussian(0, 0.02) weights, zero biases, unit layer-norm gains, zero PAD row.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg);

/// Parameter count derived from the config alone.
std::size_t expected_parameter_count(const ModelConfig& cfg);

template <typename T>
class Model {
 public:
  Model(ModelConfig config, ModelParams<T> params);
  explicit Model(const ModelConfig& config) : Model(config, init_params<T>(config)) {}

  const ModelConfig& config() const { return config_; }
  const ModelParams<T>& params() const { return params_; }
  ModelParams<T>& params() { return params_; }
  const Matrix<T>& positional() const { return positional_; }

 private:
  ModelConfig config_;
  ModelParams<T> params_;
  Matrix<T> positional_;
};

/// Dropout for one batch: each row draws from its own stream derived from
/// (seed, step, row), which keeps results independent of threading.
struct DropoutSpec {
  bool enabled = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// Full mode: [B, L] logits (0 at padded positions). last_query: [B, 1]
/// logits for each row's last valid position. Without an LSTM these equal
/// the full-mode logits there; with one, the recurrence runs a single step
/// from zero state on the last-query encoder row.
template <typename T>
Matrix<T> model_forward(const WindowedBatch& batch, const Model<T>& model, AttentionMode mode,
                        const DropoutSpec& dropout = {}, int threads = 1);

struct LossAndCount {
  double loss_sum = 0.0;  // BCE summed over scored positions
  std::size_t count = 0;
};

/// Mean BCE-with-logits over the scored positions (every valid position in
/// full mode, the last valid one per row in last_query mode) and its
/// gradient, accumulated into `grads` (which must be shaped like the model).
template <typename T>
LossAndCount model_loss_and_grad(const WindowedBatch& batch, const Model<T>& model, AttentionMode mode,
                                 const DropoutSpec& dropout, ModelParams<T>& grads, int threads = 1);

/// Loss only, no gradient.
template <typename T>
LossAndCount model_loss(const WindowedBatch& batch, const Model<T>& model, AttentionMode mode, int threads = 1);

/// Analytic per-row activation cache bytes for one sequence of `length`
/// valid steps (the state a forward keeps for backward), plus the
/// measured equivalent from an actual forward pass for cross-checking.
std::size_t activation_bytes_per_sequence(const ModelConfig& cfg, int length, AttentionMode mode, bool dropout,
                                          std::size_t scalar_bytes = sizeof(float));
template <typename T>
std::size_t measured_activation_bytes(const WindowedBatch& batch, int row, const Model<T>& model, AttentionMode mode,
                                      bool dropout);

}  // namespace lbkt
