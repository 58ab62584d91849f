#include "lbkt/sequence_head.hpp"

#include <cmath>
#include <stdexcept>

namespace lbkt {

namespace {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
LstmParams<T> LstmParams<T>::zeros(int input_width, int hidden) {
  LstmParams p;
  for (Matrix<T>* w : {&p.w_i, &p.w_f, &p.w_g, &p.w_o}) w->setZero(input_width + hidden, hidden);
  for (Matrix<T>* b : {&p.b_i, &p.b_f, &p.b_g, &p.b_o}) b->setZero(1, hidden);
  return p;
}

template <typename T>
OutputProjection<T> OutputProjection<T>::zeros(int input_width) {
  OutputProjection p;
  p.w.setZero(input_width, 1);
  p.b.setZero(1, 1);
  return p;
}

template <typename T>
std::size_t LstmCache<T>::bytes() const {
  std::size_t count = 0;
  for (const Matrix<T>* m : {&input, &gate_i, &gate_f, &gate_g, &gate_o, &cell, &hidden}) {
    count += static_cast<std::size_t>(m->size());
  }
  return count * sizeof(T) + valid.size();
}

template <typename T>
Matrix<T> lstm_sequence(const Matrix<T>& x, std::span<const std::uint8_t> valid, const LstmParams<T>& p,
                        LstmCache<T>* cache) {
  const int d = p.input_width();
  const int h = p.hidden();
  const auto n = x.rows();
  if (x.cols() != d) throw std::invalid_argument("LSTM input width differs from its weights");
  if (static_cast<std::size_t>(n) != valid.size()) throw std::invalid_argument("LSTM mask length differs from input");

  // Input contributions for every step at once; the recurrence adds h_{t-1} W_h.
  Matrix<T> pre_i = x * p.w_i.topRows(d);
  Matrix<T> pre_f = x * p.w_f.topRows(d);
  Matrix<T> pre_g = x * p.w_g.topRows(d);
  Matrix<T> pre_o = x * p.w_o.topRows(d);
  const auto wh_i = p.w_i.bottomRows(h);
  const auto wh_f = p.w_f.bottomRows(h);
  const auto wh_g = p.w_g.bottomRows(h);
  const auto wh_o = p.w_o.bottomRows(h);

  Matrix<T> gi = Matrix<T>::Zero(n, h), gf = Matrix<T>::Zero(n, h), gg = Matrix<T>::Zero(n, h),
            go = Matrix<T>::Zero(n, h);
  Matrix<T> cell(n, h), hidden(n, h);
  RowVector<T> h_prev = RowVector<T>::Zero(h);
  RowVector<T> c_prev = RowVector<T>::Zero(h);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (valid[static_cast<std::size_t>(t)]) {
      const RowVector<T> ai = pre_i.row(t) + h_prev * wh_i + p.b_i.row(0);
      const RowVector<T> af = pre_f.row(t) + h_prev * wh_f + p.b_f.row(0);
      const RowVector<T> ag = pre_g.row(t) + h_prev * wh_g + p.b_g.row(0);
      const RowVector<T> ao = pre_o.row(t) + h_prev * wh_o + p.b_o.row(0);
      gi.row(t) = ai.unaryExpr([](T v) { return sigmoid(v); });
      gf.row(t) = af.unaryExpr([](T v) { return sigmoid(v); });
      gg.row(t) = ag.array().tanh().matrix();
      go.row(t) = ao.unaryExpr([](T v) { return sigmoid(v); });
      c_prev = gf.row(t).cwiseProduct(c_prev) + gi.row(t).cwiseProduct(gg.row(t));
      h_prev = go.row(t).cwiseProduct(c_prev.array().tanh().matrix());
    }
    cell.row(t) = c_prev;
    hidden.row(t) = h_prev;
  }
  if (cache) {
    cache->input = x;
    cache->gate_i = std::move(gi);
    cache->gate_f = std::move(gf);
    cache->gate_g = std::move(gg);
    cache->gate_o = std::move(go);
    cache->cell = std::move(cell);
    cache->hidden = hidden;
    cache->valid.assign(valid.begin(), valid.end());
  }
  return hidden;
}

template <typename T>
Matrix<T> lstm_sequence_backward(const Matrix<T>& grad_hidden, const LstmCache<T>& c, const LstmParams<T>& p,
                                 LstmParams<T>& g) {
  const int d = p.input_width();
  const int h = p.hidden();
  const auto n = c.hidden.rows();
  const auto wh_i = p.w_i.bottomRows(h);
  const auto wh_f = p.w_f.bottomRows(h);
  const auto wh_g = p.w_g.bottomRows(h);
  const auto wh_o = p.w_o.bottomRows(h);

  Matrix<T> da_i = Matrix<T>::Zero(n, h), da_f = Matrix<T>::Zero(n, h), da_g = Matrix<T>::Zero(n, h),
            da_o = Matrix<T>::Zero(n, h);
  // prev_hidden row t holds h_{t-1} as seen by step t (zero at t = 0).
  Matrix<T> prev_hidden = Matrix<T>::Zero(n, h);
  RowVector<T> dh_next = RowVector<T>::Zero(h);
  RowVector<T> dc_next = RowVector<T>::Zero(h);
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const RowVector<T> dh = grad_hidden.row(t) + dh_next;
    if (!c.valid[static_cast<std::size_t>(t)]) {
      dh_next = dh;
      continue;
    }
    const RowVector<T> c_prev = t > 0 ? RowVector<T>(c.cell.row(t - 1)) : RowVector<T>::Zero(h);
    if (t > 0) prev_hidden.row(t) = c.hidden.row(t - 1);
    const auto i = c.gate_i.row(t).array();
    const auto f = c.gate_f.row(t).array();
    const auto gv = c.gate_g.row(t).array();
    const auto o = c.gate_o.row(t).array();
    const auto tanh_c = c.cell.row(t).array().tanh();
    const auto dha = dh.array();
    const RowVector<T> dc = (dha * o * (T(1) - tanh_c.square()) + dc_next.array()).matrix();
    da_o.row(t) = (dha * tanh_c * o * (T(1) - o)).matrix();
    da_i.row(t) = (dc.array() * gv * i * (T(1) - i)).matrix();
    da_g.row(t) = (dc.array() * i * (T(1) - gv.square())).matrix();
    da_f.row(t) = (dc.array() * c_prev.array() * f * (T(1) - f)).matrix();
    dc_next = (dc.array() * f).matrix();
    dh_next = da_i.row(t) * wh_i.transpose() + da_f.row(t) * wh_f.transpose() + da_g.row(t) * wh_g.transpose() +
              da_o.row(t) * wh_o.transpose();
  }

  Matrix<T> dx = Matrix<T>::Zero(n, d);
  const auto accumulate = [&](const Matrix<T>& da, const Matrix<T>& w, Matrix<T>& dw, Matrix<T>& db) {
    dw.topRows(d).noalias() += c.input.transpose() * da;
    dw.bottomRows(h).noalias() += prev_hidden.transpose() * da;
    db.row(0) += da.colwise().sum();
    dx.noalias() += da * w.topRows(d).transpose();
  };
  accumulate(da_i, p.w_i, g.w_i, g.b_i);
  accumulate(da_f, p.w_f, g.w_f, g.b_f);
  accumulate(da_g, p.w_g, g.w_g, g.b_g);
  accumulate(da_o, p.w_o, g.w_o, g.b_o);
  return dx;
}

template <typename T>
std::vector<Matrix<T>> lstm_forward(const std::vector<Matrix<T>>& inputs, std::span<const std::uint8_t> valid_mask,
                                    const LstmParams<T>& params) {
  std::vector<Matrix<T>> out;
  out.reserve(inputs.size());
  std::size_t offset = 0;
  for (const auto& x : inputs) {
    const auto len = static_cast<std::size_t>(x.rows());
    if (offset + len > valid_mask.size()) throw std::invalid_argument("validity mask shorter than batch");
    out.push_back(lstm_sequence<T>(x, valid_mask.subspan(offset, len), params));
    offset += len;
  }
  return out;
}

template <typename T>
Matrix<T> project_sequence(const Matrix<T>& s, const OutputProjection<T>& proj) {
  if (s.cols() != proj.w.rows()) throw std::invalid_argument("projection width differs from its input");
  Matrix<T> logits = s * proj.w;
  logits.array() += proj.b(0, 0);
  return logits;
}

template <typename T>
Matrix<T> project_logits(const std::vector<Matrix<T>>& states, const OutputProjection<T>& proj) {
  if (states.empty()) return Matrix<T>(0, 0);
  Matrix<T> out(static_cast<Eigen::Index>(states.size()), states.front().rows());
  for (std::size_t b = 0; b < states.size(); ++b) {
    if (states[b].rows() != out.cols()) throw std::invalid_argument("ragged batch passed to project_logits");
    out.row(static_cast<Eigen::Index>(b)) = project_sequence(states[b], proj).transpose();
  }
  return out;
}

#define LBKT_INSTANTIATE(T)                                                                                       \
  template struct LstmParams<T>;                                                                                  \
  template struct OutputProjection<T>;                                                                            \
  template struct LstmCache<T>;                                                                                   \
  template Matrix<T> lstm_sequence<T>(const Matrix<T>&, std::span<const std::uint8_t>, const LstmParams<T>&,      \
                                      LstmCache<T>*);                                                             \
  template Matrix<T> lstm_sequence_backward<T>(const Matrix<T>&, const LstmCache<T>&, const LstmParams<T>&,       \
                                               LstmParams<T>&);                                                   \
  template std::vector<Matrix<T>> lstm_forward<T>(const std::vector<Matrix<T>>&, std::span<const std::uint8_t>,   \
                                                  const LstmParams<T>&);                                          \
  template Matrix<T> project_sequence<T>(const Matrix<T>&, const OutputProjection<T>&);                           \
  template Matrix<T> project_logits<T>(const std::vector<Matrix<T>>&, const OutputProjection<T>&);
LBKT_INSTANTIATE(float)
LBKT_INSTANTIATE(double)
#undef LBKT_INSTANTIATE

}  // namespace lbkt
