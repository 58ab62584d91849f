#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lbkt/tensor.hpp"

namespace lbkt {

/// Gate weights act on the concatenation [x_t, h_{t-1}]: [d + h, h] each.
template <typename T>
struct LstmParams {
  Matrix<T> w_i, w_f, w_g, w_o;
  Matrix<T> b_i, b_f, b_g, b_o;

  bool empty() const { return w_i.size() == 0; }
  int hidden() const { return static_cast<int>(w_i.cols()); }
  int input_width() const { return static_cast<int>(w_i.rows()) - hidden(); }

  static LstmParams zeros(int input_width, int hidden);

  template <typename Self, typename F>
  static void visit(Self& p, F&& f) {
    f("w_i", p.w_i);
    f("b_i", p.b_i);
    f("w_f", p.w_f);
    f("b_f", p.b_f);
    f("w_g", p.w_g);
    f("b_g", p.b_g);
    f("w_o", p.w_o);
    f("b_o", p.b_o);
  }
};

/// logit = s W + b with W [h, 1].
template <typename T>
struct OutputProjection {
  Matrix<T> w;
  Matrix<T> b;

  static OutputProjection zeros(int input_width);
};

template <typename T>
struct LstmCache {
  Matrix<T> input;
  Matrix<T> gate_i, gate_f, gate_g, gate_o;
  Matrix<T> cell;
  Matrix<T> hidden;
  std::vector<std::uint8_t> valid;

  std::size_t bytes() const;
};

/// Left-to-right recurrence from zero state over one sequence [n, d].
/// Invalid steps carry (h, c) through unchanged. Returns [n, h].
template <typename T>
Matrix<T> lstm_sequence(const Matrix<T>& x, std::span<const std::uint8_t> valid, const LstmParams<T>& params,
                        LstmCache<T>* cache = nullptr);

/// Backpropagation through time; returns dLoss/dx, [n, d].
template <typename T>
Matrix<T> lstm_sequence_backward(const Matrix<T>& grad_hidden, const LstmCache<T>& cache, const LstmParams<T>& params,
                                 LstmParams<T>& grads);

/// Batch form over [B][L, d] with a flat [B, L] validity mask.
template <typename T>
std::vector<Matrix<T>> lstm_forward(const std::vector<Matrix<T>>& inputs, std::span<const std::uint8_t> valid_mask,
                                    const LstmParams<T>& params);

/// [n, w] -> [n] logits as a column.
template <typename T>
Matrix<T> project_sequence(const Matrix<T>& s, const OutputProjection<T>& proj);

/// [B][L, w] -> [B, L].
template <typename T>
Matrix<T> project_logits(const std::vector<Matrix<T>>& states, const OutputProjection<T>& proj);

}  // namespace lbkt
