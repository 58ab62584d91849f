#include "lbkt/embedding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lbkt {

template <typename T>
Matrix<T> positional_encoding(int length, int width) {
  if (width <= 0 || width % 2 != 0) throw std::invalid_argument("positional encoding width must be positive and even");
  if (length < 1) throw std::invalid_argument("positional encoding length must be at least 1");
  Matrix<T> table(length, width);
  for (int p = 0; p < length; ++p) {
    for (int i = 0; i < width / 2; ++i) {
      const double angle = p / std::pow(10000.0, 2.0 * i / width);
      table(p, 2 * i) = static_cast<T>(std::sin(angle));
      table(p, 2 * i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  return table;
}

template <typename T>
RowVector<T> rasch_combine(const RowVector<T>& e_d, const RowVector<T>& e_q) {
  if (e_d.size() != e_q.size()) throw std::invalid_argument("rasch_combine: width mismatch");
  return e_d + e_d.cwiseProduct(e_q);
}

namespace {

void check_row(Eigen::Index row, Eigen::Index rows, const char* table) {
  if (row < 0 || row >= rows) {
    throw std::out_of_range(std::string("index ") + std::to_string(row) + " outside " + table + " table of " +
                            std::to_string(rows) + " rows");
  }
}

}  // namespace

template <typename T>
Matrix<T> compose_sequence(const WindowedBatch& batch, int b, int extent, const EmbeddingParams<T>& params,
                           const Matrix<T>& positional, bool use_rasch) {
  const int d = params.width();
  if (extent > positional.rows()) {
    throw std::out_of_range("sequence of length " + std::to_string(extent) + " exceeds positional table of " +
                            std::to_string(positional.rows()));
  }
  Matrix<T> out = Matrix<T>::Zero(extent, d);
  for (int t = 0; t < extent; ++t) {
    const std::size_t o = batch.offset(b, t);
    if (!batch.valid_mask[o]) continue;
    const auto q = batch.question_ids[o];
    const auto r = batch.prev_responses[o];
    check_row(q, params.question.rows(), "question");
    check_row(r, params.response.rows(), "response");
    auto row = out.row(t);
    row = params.question.row(q) + params.response.row(r) + positional.row(t);
    if (use_rasch) {
      const auto k = batch.difficulty_buckets[o];
      check_row(k, params.difficulty.rows(), "difficulty");
      row += params.difficulty.row(k) + params.difficulty.row(k).cwiseProduct(params.question.row(q));
    }
  }
  return out;
}

template <typename T>
std::vector<Matrix<T>> compose_input(const WindowedBatch& batch, const EmbeddingParams<T>& params,
                                     const Matrix<T>& positional, bool use_rasch) {
  std::vector<Matrix<T>> out;
  out.reserve(static_cast<std::size_t>(batch.batch));
  for (int b = 0; b < batch.batch; ++b) {
    out.push_back(compose_sequence(batch, b, batch.length, params, positional, use_rasch));
  }
  return out;
}

template <typename T>
void compose_sequence_backward(const WindowedBatch& batch, int b, const Matrix<T>& grad_embedded,
                               const EmbeddingParams<T>& params, bool use_rasch, EmbeddingParams<T>& grads) {
  for (int t = 0; t < grad_embedded.rows(); ++t) {
    const std::size_t o = batch.offset(b, t);
    if (!batch.valid_mask[o]) continue;
    const auto q = batch.question_ids[o];
    const auto r = batch.prev_responses[o];
    const auto g = grad_embedded.row(t);
    grads.response.row(r) += g;
    if (use_rasch) {
      const auto k = batch.difficulty_buckets[o];
      grads.question.row(q) += g + g.cwiseProduct(params.difficulty.row(k));
      grads.difficulty.row(k) += g + g.cwiseProduct(params.question.row(q));
    } else {
      grads.question.row(q) += g;
    }
  }
  // PAD row stays frozen.
  if (batch.pad_question >= 0 && batch.pad_question < grads.question.rows()) grads.question.row(batch.pad_question).setZero();
}

#define LBKT_INSTANTIATE(T)                                                                                       \
  template Matrix<T> positional_encoding<T>(int, int);                                                            \
  template RowVector<T> rasch_combine<T>(const RowVector<T>&, const RowVector<T>&);                               \
  template Matrix<T> compose_sequence<T>(const WindowedBatch&, int, int, const EmbeddingParams<T>&,               \
                                         const Matrix<T>&, bool);                                                 \
  template std::vector<Matrix<T>> compose_input<T>(const WindowedBatch&, const EmbeddingParams<T>&,               \
                                                   const Matrix<T>&, bool);                                       \
  template void compose_sequence_backward<T>(const WindowedBatch&, int, const Matrix<T>&,                         \
                                             const EmbeddingParams<T>&, bool, EmbeddingParams<T>&);
LBKT_INSTANTIATE(float)
LBKT_INSTANTIATE(double)
#undef LBKT_INSTANTIATE

}  // namespace lbkt
