#pragma once

#include <vector>

#include "lbkt/dataset.hpp"
#include "lbkt/tensor.hpp"

namespace lbkt {

/// Input tables. `question` has Q + 2 rows (PAD, OOV last), `difficulty`
/// has B rows (empty when the Rasch term is disabled), `response` has one
/// row per {0, 1, START}. PAD row is kept at zero.
template <typename T>
struct EmbeddingParams {
  Matrix<T> question;
  Matrix<T> difficulty;
  Matrix<T> response;

  int width() const { return static_cast<int>(question.cols()); }
};

/// Fixed sinusoid table: [p, 2i] = sin(p / 10000^(2i/d)), [p, 2i+1] = cos(...).
template <typename T>
Matrix<T> positional_encoding(int length, int width);

/// e_d + e_d * e_q, elementwise.
template <typename T>
RowVector<T> rasch_combine(const RowVector<T>& e_d, const RowVector<T>& e_q);

/// Composed embedding for rows [0, extent) of batch row b; padded steps are
/// zero. Throws std::out_of_range on indices outside the tables.
template <typename T>
Matrix<T> compose_sequence(const WindowedBatch& batch, int b, int extent, const EmbeddingParams<T>& params,
                           const Matrix<T>& positional, bool use_rasch);

/// compose_sequence over every row of the batch at full length: [B][L, d].
template <typename T>
std::vector<Matrix<T>> compose_input(const WindowedBatch& batch, const EmbeddingParams<T>& params,
                                     const Matrix<T>& positional, bool use_rasch);

/// Accumulates dLoss/dTables given dLoss/dE for rows [0, extent) of row b.
template <typename T>
void compose_sequence_backward(const WindowedBatch& batch, int b, const Matrix<T>& grad_embedded,
                               const EmbeddingParams<T>& params, bool use_rasch, EmbeddingParams<T>& grads);

}  // namespace lbkt
