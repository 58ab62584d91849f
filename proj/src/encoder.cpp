#include "lbkt/encoder.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lbkt/error.hpp"

namespace lbkt {

std::string_view to_string(MaskMode mode) { return mode == MaskMode::causal ? "causal" : "bidirectional"; }

MaskMode parse_mask_mode(std::string_view name) {
  if (name == "causal") return MaskMode::causal;
  if (name == "bidirectional") return MaskMode::bidirectional;
  throw ConfigError("mask_mode", "unknown mask mode '" + std::string(name) + "'");
}

std::string_view to_string(AttentionMode mode) { return mode == AttentionMode::full ? "full" : "last_query"; }

AttentionMode parse_attention_mode(std::string_view name) {
  if (name == "full") return AttentionMode::full;
  if (name == "last_query" || name == "last-query") return AttentionMode::last_query;
  throw ConfigError("mode", "unknown attention mode '" + std::string(name) + "'");
}

void EncoderConfig::validate() const {
  if (num_layers < 0) throw ConfigError("model.num_layers", "must be non-negative");
  if (num_heads < 1) throw ConfigError("model.num_heads", "must be positive");
  if (d_model < 2 || d_model % 2 != 0) throw ConfigError("model.d_model", "must be a positive even number");
  if (d_model % num_heads != 0) throw ConfigError("model.num_heads", "must divide d_model");
  if (d_ff < 1) throw ConfigError("model.d_ff", "must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout", "must be in [0, 1)");
  if (!(layer_norm_epsilon > 0.0)) throw ConfigError("model.layer_norm_epsilon", "must be positive");
}

template <typename T>
EncoderLayerParams<T> EncoderLayerParams<T>::zeros(const EncoderConfig& cfg) {
  const int d = cfg.d_model;
  EncoderLayerParams p;
  for (Matrix<T>* w : {&p.wq, &p.wk, &p.wv, &p.wo}) w->setZero(d, d);
  for (Matrix<T>* b : {&p.bq, &p.bk, &p.bv, &p.bo, &p.b2, &p.ln1_gain, &p.ln1_bias, &p.ln2_gain, &p.ln2_bias}) {
    b->setZero(1, d);
  }
  p.w1.setZero(d, cfg.d_ff);
  p.b1.setZero(1, cfg.d_ff);
  p.w2.setZero(cfg.d_ff, d);
  return p;
}

template <typename T>
Matrix<T> build_attention_mask(std::span<const std::uint8_t> valid, MaskMode mode) {
  const auto n = static_cast<Eigen::Index>(valid.size());
  Matrix<T> mask(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool allowed = valid[static_cast<std::size_t>(j)] && (mode == MaskMode::bidirectional || j <= i);
      mask(i, j) = allowed ? T(0) : static_cast<T>(kMaskedScore);
    }
  }
  return mask;
}

template <typename T>
Matrix<T> masked_softmax(const Matrix<T>& scores, const Matrix<T>& mask) {
  if (scores.rows() != mask.rows() || scores.cols() != mask.cols()) {
    throw std::invalid_argument("attention mask shape does not match scores");
  }
  const T threshold = static_cast<T>(kMaskedScore / 2);
  const T neg_inf = -std::numeric_limits<T>::infinity();
  Matrix<T> out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const auto allowed = mask.row(i).array() > threshold;
    if (!allowed.any()) throw Error("attention query row " + std::to_string(i) + " has no allowed key");
    const auto shifted = scores.row(i).array() + mask.row(i).array();
    const T best = allowed.select(shifted, neg_inf).maxCoeff();
    out.row(i) = allowed.select((shifted - best).exp(), T(0)).matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename T>
std::vector<Matrix<T>> scaled_dot_product_attention(const std::vector<Matrix<T>>& q, const std::vector<Matrix<T>>& k,
                                                    const std::vector<Matrix<T>>& v, const Matrix<T>& mask,
                                                    std::vector<Matrix<T>>* weights) {
  if (q.size() != k.size() || q.size() != v.size()) throw std::invalid_argument("attention head counts differ");
  std::vector<Matrix<T>> out;
  if (weights) weights->clear();
  for (std::size_t h = 0; h < q.size(); ++h) {
    if (q[h].cols() != k[h].cols() || k[h].rows() != v[h].rows()) {
      throw std::invalid_argument("attention operand shapes do not conform");
    }
    const T scale = T(1) / std::sqrt(static_cast<T>(q[h].cols()));
    Matrix<T> scores = (q[h] * k[h].transpose()) * scale;
    Matrix<T> p = masked_softmax(scores, mask);
    out.push_back(p * v[h]);
    if (weights) weights->push_back(std::move(p));
  }
  return out;
}

template <typename T>
T gelu(T u) {
  return u * T(0.5) * (T(1) + std::erf(u / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_derivative(T u) {
  const T cdf = T(0.5) * (T(1) + std::erf(u / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * u * u) * (std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>);
  return cdf + u * pdf;
}

template <typename T>
Matrix<T> feed_forward(const Matrix<T>& x, const EncoderLayerParams<T>& layer) {
  Matrix<T> pre = x * layer.w1;
  pre.rowwise() += layer.b1.row(0);
  Matrix<T> out = pre.unaryExpr([](T u) { return gelu(u); }) * layer.w2;
  out.rowwise() += layer.b2.row(0);
  return out;
}

namespace {

template <typename T>
void layer_norm_rows(const Matrix<T>& u, const Matrix<T>& gain, const Matrix<T>& bias, double epsilon, Matrix<T>& y,
                     Matrix<T>* hat_out, Matrix<T>* rstd_out) {
  const auto width = static_cast<T>(u.cols());
  Matrix<T> hat(u.rows(), u.cols());
  Matrix<T> rstd(u.rows(), 1);
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const T mean = u.row(r).sum() / width;
    const auto centered = (u.row(r).array() - mean).matrix();
    const T var = centered.squaredNorm() / width;
    rstd(r, 0) = T(1) / std::sqrt(var + static_cast<T>(epsilon));
    hat.row(r) = centered * rstd(r, 0);
  }
  y = (hat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (hat_out) *hat_out = std::move(hat);
  if (rstd_out) *rstd_out = std::move(rstd);
}

template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& hat, const Matrix<T>& rstd, const Matrix<T>& gain,
                              Matrix<T>& dgain, Matrix<T>& dbias) {
  dgain.row(0) += dy.cwiseProduct(hat).colwise().sum();
  dbias.row(0) += dy.colwise().sum();
  const Matrix<T> dhat = dy.array().rowwise() * gain.row(0).array();
  const auto width = static_cast<T>(dy.cols());
  Matrix<T> du(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const T mean_dhat = dhat.row(r).sum() / width;
    const T mean_dhat_hat = dhat.row(r).dot(hat.row(r)) / width;
    du.row(r) = rstd(r, 0) * ((dhat.row(r).array() - mean_dhat) - hat.row(r).array() * mean_dhat_hat).matrix();
  }
  return du;
}

template <typename T>
Matrix<T> dropout_keep(Eigen::Index rows, Eigen::Index cols, const Dropout& drop) {
  Matrix<T> keep(rows, cols);
  const T scale = static_cast<T>(1.0 / (1.0 - drop.rate));
  // Each 64-bit draw decides two entries through its 32-bit halves.
  const auto cut = static_cast<std::uint64_t>(std::llround(drop.rate * 4294967296.0));
  T* data = keep.data();
  const Eigen::Index n = keep.size();
  for (Eigen::Index i = 0; i < n; i += 2) {
    const std::uint64_t bits = drop.rng->next();
    data[i] = (bits & 0xFFFFFFFFu) < cut ? T(0) : scale;
    if (i + 1 < n) data[i + 1] = (bits >> 32) < cut ? T(0) : scale;
  }
  return keep;
}

template <typename T>
Matrix<T> layer_forward(const Matrix<T>& x, const Matrix<T>& mask, int qb, int qe, const EncoderLayerParams<T>& p,
                        const EncoderConfig& cfg, const Dropout& drop, LayerCache<T>* c) {
  const int m = qe - qb;
  const int dk = cfg.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  const Matrix<T> xq = x.middleRows(qb, m);
  const Matrix<T> qmask = mask.middleRows(qb, m);

  Matrix<T> q = xq * p.wq;
  q.rowwise() += p.bq.row(0);
  Matrix<T> k = x * p.wk;
  k.rowwise() += p.bk.row(0);
  Matrix<T> v = x * p.wv;
  v.rowwise() += p.bv.row(0);

  Matrix<T> context(m, cfg.d_model);
  std::vector<Matrix<T>> probs_all;
  std::vector<Matrix<T>> keep_all;
  for (int h = 0; h < cfg.num_heads; ++h) {
    const Matrix<T> scores = (q.middleCols(h * dk, dk) * k.middleCols(h * dk, dk).transpose()) * scale;
    Matrix<T> probs = masked_softmax(scores, qmask);
    if (drop.active()) {
      Matrix<T> keep = dropout_keep<T>(m, x.rows(), drop);
      context.middleCols(h * dk, dk) = probs.cwiseProduct(keep) * v.middleCols(h * dk, dk);
      if (c) keep_all.push_back(std::move(keep));
    } else {
      context.middleCols(h * dk, dk) = probs * v.middleCols(h * dk, dk);
    }
    if (c) probs_all.push_back(std::move(probs));
  }

  Matrix<T> attn = context * p.wo;
  attn.rowwise() += p.bo.row(0);
  Matrix<T> attn_keep;
  if (drop.active()) {
    attn_keep = dropout_keep<T>(m, cfg.d_model, drop);
    attn = attn.cwiseProduct(attn_keep);
  }
  Matrix<T> h1;
  Matrix<T> ln1_hat, ln1_rstd;
  layer_norm_rows<T>(xq + attn, p.ln1_gain, p.ln1_bias, cfg.layer_norm_epsilon, h1, c ? &ln1_hat : nullptr,
                     c ? &ln1_rstd : nullptr);

  Matrix<T> pre = h1 * p.w1;
  pre.rowwise() += p.b1.row(0);
  Matrix<T> act = pre.unaryExpr([](T u) { return gelu(u); });
  Matrix<T> ffn = act * p.w2;
  ffn.rowwise() += p.b2.row(0);
  Matrix<T> ffn_keep;
  if (drop.active()) {
    ffn_keep = dropout_keep<T>(m, cfg.d_model, drop);
    ffn = ffn.cwiseProduct(ffn_keep);
  }
  Matrix<T> out;
  Matrix<T> ln2_hat, ln2_rstd;
  layer_norm_rows<T>(h1 + ffn, p.ln2_gain, p.ln2_bias, cfg.layer_norm_epsilon, out, c ? &ln2_hat : nullptr,
                     c ? &ln2_rstd : nullptr);

  if (c) {
    c->query_begin = qb;
    c->query_end = qe;
    c->input = x;
    c->q = std::move(q);
    c->k = std::move(k);
    c->v = std::move(v);
    c->probs = std::move(probs_all);
    c->probs_keep = std::move(keep_all);
    c->context = std::move(context);
    c->attn_keep = std::move(attn_keep);
    c->ln1_hat = std::move(ln1_hat);
    c->ln1_rstd = std::move(ln1_rstd);
    c->h1 = std::move(h1);
    c->ffn_pre = std::move(pre);
    c->ffn_act = std::move(act);
    c->ffn_keep = std::move(ffn_keep);
    c->ln2_hat = std::move(ln2_hat);
    c->ln2_rstd = std::move(ln2_rstd);
  }
  return out;
}

template <typename T>
Matrix<T> layer_backward(const Matrix<T>& dout, const LayerCache<T>& c, const EncoderLayerParams<T>& p,
                         const EncoderConfig& cfg, EncoderLayerParams<T>& g) {
  const int qb = c.query_begin;
  const int m = c.query_end - c.query_begin;
  const auto n = c.input.rows();
  const int dk = cfg.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dk));

  const Matrix<T> du2 = layer_norm_backward(dout, c.ln2_hat, c.ln2_rstd, p.ln2_gain, g.ln2_gain, g.ln2_bias);
  Matrix<T> dffn = c.ffn_keep.size() ? Matrix<T>(du2.cwiseProduct(c.ffn_keep)) : du2;
  g.w2.noalias() += c.ffn_act.transpose() * dffn;
  g.b2.row(0) += dffn.colwise().sum();
  const Matrix<T> dpre =
      (dffn * p.w2.transpose()).cwiseProduct(c.ffn_pre.unaryExpr([](T u) { return gelu_derivative(u); }));
  g.w1.noalias() += c.h1.transpose() * dpre;
  g.b1.row(0) += dpre.colwise().sum();
  Matrix<T> dh1 = du2;
  dh1.noalias() += dpre * p.w1.transpose();

  const Matrix<T> du1 = layer_norm_backward(dh1, c.ln1_hat, c.ln1_rstd, p.ln1_gain, g.ln1_gain, g.ln1_bias);
  Matrix<T> dx = Matrix<T>::Zero(n, cfg.d_model);
  dx.middleRows(qb, m) += du1;
  const Matrix<T> dattn = c.attn_keep.size() ? Matrix<T>(du1.cwiseProduct(c.attn_keep)) : du1;
  g.wo.noalias() += c.context.transpose() * dattn;
  g.bo.row(0) += dattn.colwise().sum();
  const Matrix<T> dcontext = dattn * p.wo.transpose();

  Matrix<T> dq(m, cfg.d_model);
  Matrix<T> dk_all = Matrix<T>::Zero(n, cfg.d_model);
  Matrix<T> dv_all = Matrix<T>::Zero(n, cfg.d_model);
  for (int h = 0; h < cfg.num_heads; ++h) {
    const auto& probs = c.probs[static_cast<std::size_t>(h)];
    const bool dropped = !c.probs_keep.empty();
    const auto dctx = dcontext.middleCols(h * dk, dk);
    if (dropped) {
      const auto& keep = c.probs_keep[static_cast<std::size_t>(h)];
      dv_all.middleCols(h * dk, dk).noalias() += probs.cwiseProduct(keep).transpose() * dctx;
    } else {
      dv_all.middleCols(h * dk, dk).noalias() += probs.transpose() * dctx;
    }
    Matrix<T> dprobs = dctx * c.v.middleCols(h * dk, dk).transpose();
    if (dropped) dprobs = dprobs.cwiseProduct(c.probs_keep[static_cast<std::size_t>(h)]);
    const Matrix<T> rowdot = dprobs.cwiseProduct(probs).rowwise().sum();
    const Matrix<T> dscores = (probs.array() * (dprobs.array().colwise() - rowdot.col(0).array())).matrix() * scale;
    dq.middleCols(h * dk, dk) = dscores * c.k.middleCols(h * dk, dk);
    dk_all.middleCols(h * dk, dk).noalias() += dscores.transpose() * c.q.middleCols(h * dk, dk);
  }

  const Matrix<T> xq = c.input.middleRows(qb, m);
  g.wq.noalias() += xq.transpose() * dq;
  g.bq.row(0) += dq.colwise().sum();
  dx.middleRows(qb, m).noalias() += dq * p.wq.transpose();
  g.wk.noalias() += c.input.transpose() * dk_all;
  g.bk.row(0) += dk_all.colwise().sum();
  dx.noalias() += dk_all * p.wk.transpose();
  g.wv.noalias() += c.input.transpose() * dv_all;
  g.bv.row(0) += dv_all.colwise().sum();
  dx.noalias() += dv_all * p.wv.transpose();
  return dx;
}

int last_valid(std::span<const std::uint8_t> valid) {
  for (std::size_t t = valid.size(); t > 0; --t) {
    if (valid[t - 1]) return static_cast<int>(t - 1);
  }
  return -1;
}

}  // namespace

template <typename T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias, double epsilon) {
  Matrix<T> y;
  layer_norm_rows<T>(x, gain, bias, epsilon, y, nullptr, nullptr);
  return y;
}

template <typename T>
Matrix<T> sublayer(const Matrix<T>& x, const std::function<Matrix<T>(const Matrix<T>&)>& f, const Matrix<T>& gain,
                   const Matrix<T>& bias, double epsilon) {
  const Matrix<T> fx = f(x);
  if (fx.rows() != x.rows() || fx.cols() != x.cols()) throw std::invalid_argument("sublayer function changed shape");
  return layer_norm<T>(x + fx, gain, bias, epsilon);
}

template <typename T>
std::size_t LayerCache<T>::bytes() const {
  std::size_t count = 0;
  for (const Matrix<T>* mtx : {&input, &q, &k, &v, &context, &attn_keep, &ln1_hat, &ln1_rstd, &h1, &ffn_pre, &ffn_act,
                               &ffn_keep, &ln2_hat, &ln2_rstd}) {
    count += static_cast<std::size_t>(mtx->size());
  }
  for (const auto& p : probs) count += static_cast<std::size_t>(p.size());
  for (const auto& p : probs_keep) count += static_cast<std::size_t>(p.size());
  return count * sizeof(T);
}

template <typename T>
std::size_t EncoderCache<T>::bytes() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.bytes();
  return total;
}

template <typename T>
Matrix<T> encode_sequence(const Matrix<T>& x, std::span<const std::uint8_t> valid, const EncoderConfig& cfg,
                          const std::vector<EncoderLayerParams<T>>& layers, AttentionMode mode, Dropout dropout,
                          EncoderCache<T>* cache) {
  if (static_cast<std::size_t>(x.rows()) != valid.size()) throw std::invalid_argument("mask length differs from input");
  if (x.cols() != cfg.d_model) throw std::invalid_argument("encoder input width differs from d_model");
  const int last = last_valid(valid);
  if (last < 0) throw Error("cannot encode an all-padding sequence");
  const int n = static_cast<int>(x.rows());
  if (cache) {
    cache->layers.assign(layers.size(), LayerCache<T>{});
    cache->length = n;
    cache->last_valid = last;
    cache->mode = mode;
  }
  if (layers.empty()) return mode == AttentionMode::full ? x : Matrix<T>(x.row(last));

  const Matrix<T> mask = build_attention_mask<T>(valid, cfg.mask_mode);
  Matrix<T> h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const bool final_layer = l + 1 == layers.size();
    const bool restrict = final_layer && mode == AttentionMode::last_query;
    const int qb = restrict ? last : 0;
    const int qe = restrict ? last + 1 : n;
    h = layer_forward<T>(h, mask, qb, qe, layers[l], cfg, dropout, cache ? &cache->layers[l] : nullptr);
  }
  return h;
}

template <typename T>
Matrix<T> encode_sequence_backward(const Matrix<T>& grad_out, const EncoderCache<T>& cache,
                                   const EncoderConfig& cfg, const std::vector<EncoderLayerParams<T>>& layers,
                                   std::vector<EncoderLayerParams<T>>& grads) {
  if (layers.empty()) {
    if (cache.mode == AttentionMode::full) return grad_out;
    Matrix<T> dx = Matrix<T>::Zero(cache.length, grad_out.cols());
    dx.row(cache.last_valid) = grad_out.row(0);
    return dx;
  }
  Matrix<T> g = grad_out;
  for (std::size_t l = layers.size(); l > 0; --l) {
    g = layer_backward<T>(g, cache.layers[l - 1], layers[l - 1], cfg, grads[l - 1]);
  }
  return g;
}

template <typename T>
std::vector<Matrix<T>> encoder_forward(const std::vector<Matrix<T>>& embedded, std::span<const std::uint8_t> valid_mask,
                                       const EncoderConfig& cfg, const std::vector<EncoderLayerParams<T>>& layers,
                                       AttentionMode mode, Rng* dropout_rng) {
  std::vector<Matrix<T>> out;
  out.reserve(embedded.size());
  std::size_t offset = 0;
  for (const auto& x : embedded) {
    const auto len = static_cast<std::size_t>(x.rows());
    if (offset + len > valid_mask.size()) throw std::invalid_argument("validity mask shorter than batch");
    out.push_back(encode_sequence<T>(x, valid_mask.subspan(offset, len), cfg, layers, mode,
                                     Dropout{cfg.dropout, dropout_rng}));
    offset += len;
  }
  return out;
}

#define LBKT_INSTANTIATE(T)                                                                                       \
  template struct EncoderLayerParams<T>;                                                                          \
  template struct LayerCache<T>;                                                                                  \
  template struct EncoderCache<T>;                                                                                \
  template Matrix<T> build_attention_mask<T>(std::span<const std::uint8_t>, MaskMode);                            \
  template Matrix<T> masked_softmax<T>(const Matrix<T>&, const Matrix<T>&);                                       \
  template std::vector<Matrix<T>> scaled_dot_product_attention<T>(                                                \
      const std::vector<Matrix<T>>&, const std::vector<Matrix<T>>&, const std::vector<Matrix<T>>&,                \
      const Matrix<T>&, std::vector<Matrix<T>>*);                                                                 \
  template T gelu<T>(T);                                                                                          \
  template T gelu_derivative<T>(T);                                                                               \
  template Matrix<T> feed_forward<T>(const Matrix<T>&, const EncoderLayerParams<T>&);                             \
  template Matrix<T> layer_norm<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&, double);                 \
  template Matrix<T> sublayer<T>(const Matrix<T>&, const std::function<Matrix<T>(const Matrix<T>&)>&,             \
                                 const Matrix<T>&, const Matrix<T>&, double);                                     \
  template Matrix<T> encode_sequence<T>(const Matrix<T>&, std::span<const std::uint8_t>, const EncoderConfig&,    \
                                        const std::vector<EncoderLayerParams<T>>&, AttentionMode, Dropout,        \
                                        EncoderCache<T>*);                                                        \
  template Matrix<T> encode_sequence_backward<T>(const Matrix<T>&, const EncoderCache<T>&, const EncoderConfig&,  \
                                                 const std::vector<EncoderLayerParams<T>>&,                       \
                                                 std::vector<EncoderLayerParams<T>>&);                            \
  template std::vector<Matrix<T>> encoder_forward<T>(const std::vector<Matrix<T>>&, std::span<const std::uint8_t>, \
                                                     const EncoderConfig&, const std::vector<EncoderLayerParams<T>>&, \
                                                     AttentionMode, Rng*);
LBKT_INSTANTIATE(float)
LBKT_INSTANTIATE(double)
#undef LBKT_INSTANTIATE

}  // namespace lbkt
