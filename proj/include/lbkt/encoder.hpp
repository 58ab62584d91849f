#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lbkt/random.hpp"
#include "lbkt/tensor.hpp"

namespace lbkt {

enum class MaskMode { causal, bidirectional };

/// full: every position is a query in every layer. last_query: the final
/// layer keeps only the last valid position as its query.
enum class AttentionMode { full, last_query };

std::string_view to_string(MaskMode mode);
MaskMode parse_mask_mode(std::string_view name);
std::string_view to_string(AttentionMode mode);
AttentionMode parse_attention_mode(std::string_view name);

struct EncoderConfig {
  int num_layers = 12;
  int num_heads = 8;
  int d_model = 128;
  int d_ff = 512;
  double dropout = 0.2;
  MaskMode mask_mode = MaskMode::causal;
  double layer_norm_epsilon = 1e-12;

  int head_dim() const { return d_model / num_heads; }
  /// Throws ConfigError on inconsistent sizes.
  void validate() const;
};

/// y = x W + b convention: projections are [in, out], biases [1, out].
template <typename T>
struct EncoderLayerParams {
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<T> w1, b1, w2, b2;
  Matrix<T> ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  static EncoderLayerParams zeros(const EncoderConfig& cfg);

  template <typename Self, typename F>
  static void visit(Self& p, F&& f) {
    f("attn.wq", p.wq);
    f("attn.bq", p.bq);
    f("attn.wk", p.wk);
    f("attn.bk", p.bk);
    f("attn.wv", p.wv);
    f("attn.bv", p.bv);
    f("attn.wo", p.wo);
    f("attn.bo", p.bo);
    f("ln1.gain", p.ln1_gain);
    f("ln1.bias", p.ln1_bias);
    f("ffn.w1", p.w1);
    f("ffn.b1", p.b1);
    f("ffn.w2", p.w2);
    f("ffn.b2", p.b2);
    f("ln2.gain", p.ln2_gain);
    f("ln2.bias", p.ln2_bias);
  }
};

/// Additive score offset for disallowed keys.
inline constexpr double kMaskedScore = -1e30;

/// [n, n] additive mask: key j is allowed for query i when valid[j] and,
/// in causal mode, j <= i.
template <typename T>
Matrix<T> build_attention_mask(std::span<const std::uint8_t> valid, MaskMode mode);

/// Row softmax of scores + mask. Disallowed entries get weight exactly 0;
/// a row with no allowed key throws.
template <typename T>
Matrix<T> masked_softmax(const Matrix<T>& scores, const Matrix<T>& mask);

/// softmax(Q K^T / sqrt(d_k) + mask) V per head. Q is [h][Lq, d_k], K and V
/// are [h][Lk, d_k], mask is [Lq, Lk]. Weights are optionally returned.
template <typename T>
std::vector<Matrix<T>> scaled_dot_product_attention(const std::vector<Matrix<T>>& q, const std::vector<Matrix<T>>& k,
                                                    const std::vector<Matrix<T>>& v, const Matrix<T>& mask,
                                                    std::vector<Matrix<T>>* weights = nullptr);

/// Exact GELU u * Phi(u).
template <typename T>
T gelu(T u);
template <typename T>
T gelu_derivative(T u);

/// GELU(x W1 + b1) W2 + b2.
template <typename T>
Matrix<T> feed_forward(const Matrix<T>& x, const EncoderLayerParams<T>& layer);

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, double epsilon);

/// Post-LN sublayer without dropout: LayerNorm(x + f(x)).
template <typename T>
Matrix<T> sublayer(const Matrix<T>& x, const std::function<Matrix<T>(const Matrix<T>&)>& f, const Matrix<T>& gain,
                   const Matrix<T>& bias, double epsilon);

/// Inverted dropout; inactive when rate is 0 or no generator is attached.
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;
  bool active() const { return rate > 0.0 && rng != nullptr; }
};

template <typename T>
struct LayerCache {
  int query_begin = 0;
  int query_end = 0;
  Matrix<T> input;
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> probs;
  std::vector<Matrix<T>> probs_keep;
  Matrix<T> context;
  Matrix<T> attn_keep;
  Matrix<T> ln1_hat;
  Matrix<T> ln1_rstd;
  Matrix<T> h1;
  Matrix<T> ffn_pre;
  Matrix<T> ffn_act;
  Matrix<T> ffn_keep;
  Matrix<T> ln2_hat;
  Matrix<T> ln2_rstd;

  std::size_t bytes() const;
};

template <typename T>
struct EncoderCache {
  std::vector<LayerCache<T>> layers;
  int length = 0;
  int last_valid = 0;
  AttentionMode mode = AttentionMode::full;
  std::size_t bytes() const;
};

/// One sequence through the stack. Returns [n, d] in full mode and the
/// [1, d] row of the last valid position in last_query mode. Throws if no
/// position is valid.
template <typename T>
Matrix<T> encode_sequence(const Matrix<T>& x, std::span<const std::uint8_t> valid, const EncoderConfig& cfg,
                          const std::vector<EncoderLayerParams<T>>& layers, AttentionMode mode, Dropout dropout = {},
                          EncoderCache<T>* cache = nullptr);

/// Accumulates parameter gradients and returns dLoss/dx, [n, d].
template <typename T>
Matrix<T> encode_sequence_backward(const Matrix<T>& grad_out, const EncoderCache<T>& cache,
                                   const EncoderConfig& cfg, const std::vector<EncoderLayerParams<T>>& layers,
                                   std::vector<EncoderLayerParams<T>>& grads);

/// Batch form over [B][L, d] inputs with a flat [B, L] validity mask.
template <typename T>
std::vector<Matrix<T>> encoder_forward(const std::vector<Matrix<T>>& embedded, std::span<const std::uint8_t> valid_mask,
                                       const EncoderConfig& cfg, const std::vector<EncoderLayerParams<T>>& layers,
                                       AttentionMode mode, Rng* dropout_rng = nullptr);

}  // namespace lbkt
