#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lbkt/dataset.hpp"
#include "lbkt/model.hpp"
#include "lbkt/random.hpp"
#include "lbkt/synthetic.hpp"
#include "lbkt/tensor.hpp"

namespace lbkt::test {

using Rows = std::vector<std::vector<int>>;

inline WindowedBatch make_batch(const Rows& questions, const Rows& prev, const Rows& buckets, const Rows& valid,
                                int pad_question, const Rows& labels = {}) {
  WindowedBatch b;
  b.batch = static_cast<int>(questions.size());
  b.length = b.batch ? static_cast<int>(questions[0].size()) : 0;
  b.pad_question = pad_question;
  for (std::size_t r = 0; r < questions.size(); ++r) {
    for (std::size_t t = 0; t < questions[r].size(); ++t) {
      b.question_ids.push_back(questions[r][t]);
      b.prev_responses.push_back(prev[r][t]);
      b.difficulty_buckets.push_back(buckets[r][t]);
      b.valid_mask.push_back(static_cast<std::uint8_t>(valid[r][t]));
      b.labels.push_back(static_cast<std::uint8_t>(labels.empty() ? (r + t) % 2 : labels[r][t]));
    }
  }
  return b;
}

template <typename T>
Matrix<T> random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(scale * rng.normal());
  return m;
}

/// Deterministic fill shared with tests/oracles/reference_model.py: tensor k
/// in visit order, entry i row-major, 0.5 sin(1.3 i + 0.7 k + 0.1); gains
/// are 1 + 0.4 of that. The PAD question row is zero.
template <typename T>
void reference_fill(ModelParams<T>& params, int pad_question) {
  int k = 0;
  params.visit([&](const std::string& name, Matrix<T>& m) {
    const bool gain = name.size() >= 4 && name.compare(name.size() - 4, 4, "gain") == 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double v = 0.5 * std::sin(1.3 * static_cast<double>(i) + 0.7 * k + 0.1);
      m.data()[i] = static_cast<T>(gain ? 1.0 + 0.4 * v : v);
    }
    ++k;
  });
  params.embedding.question.row(pad_question).setZero();
}

/// A random batch over `cfg` with per-row extents in [1, length].
inline WindowedBatch random_batch(Rng& rng, const ModelConfig& cfg, int batch, int length) {
  Rows q(static_cast<std::size_t>(batch)), prev = q, buckets = q, valid = q, labels = q;
  for (int r = 0; r < batch; ++r) {
    const int extent = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(length)));
    for (int t = 0; t < length; ++t) {
      const bool v = t < extent;
      q[r].push_back(v ? static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_questions + 2)))
                       : cfg.pad_question());
      if (v && q[r].back() == cfg.pad_question()) q[r].back() = cfg.oov_question();
      prev[r].push_back(t == 0 ? kStartResponse : static_cast<int>(rng.below(2)));
      buckets[r].push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_buckets))));
      valid[r].push_back(v ? 1 : 0);
      labels[r].push_back(static_cast<int>(rng.below(2)));
    }
  }
  return make_batch(q, prev, buckets, valid, cfg.pad_question(), labels);
}

inline std::vector<RawSequence> small_corpus(int students = 60, std::uint64_t seed = 7) {
  SyntheticIrtOptions o;
  o.students = students;
  o.questions = 15;
  o.min_length = 5;
  o.max_length = 30;
  o.seed = seed;
  return generate_irt(o).sequences;
}

/// d = 8, 1 layer, 2 heads, LSTM hidden 8; sized to train in milliseconds.
inline ModelConfig small_model(Variant v, int num_questions) {
  ModelConfig c;
  c.encoder.num_layers = 1;
  c.encoder.num_heads = 2;
  c.encoder.d_model = 8;
  c.encoder.d_ff = 16;
  c.encoder.dropout = 0.1;
  c.num_questions = num_questions;
  c.num_buckets = 4;
  c.lstm_hidden = 8;
  c.max_positions = 32;
  c.variant = v;
  return c;
}

}  // namespace lbkt::test
