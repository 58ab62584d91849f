#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lbkt/error.hpp"
#include "lbkt/model.hpp"

namespace lbkt {

/// AUC requested on input holding only one class.
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

/// Fraction of valid positions where (prob >= threshold) matches the label.
/// An empty `valid` span means every position counts.
double accuracy(std::span<const double> probs, std::span<const std::uint8_t> labels,
                std::span<const std::uint8_t> valid = {}, double threshold = 0.5);

/// Mann-Whitney AUC from rank sums; tied scores share their average rank,
/// so each tied positive/negative pair counts one half.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels,
           std::span<const std::uint8_t> valid = {});

/// Flattened predictions at every scored position of a window set.
struct Predictions {
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<std::uint8_t> labels;
  std::vector<std::int32_t> questions;
  std::vector<std::int32_t> buckets;

  std::size_t size() const { return probs.size(); }
};

/// Dropout-free inference in batches. Full mode scores every valid position;
/// last_query scores the last position of each window.
template <typename T>
Predictions predict(const Model<T>& model, std::span<const Window> windows, int batch_size = 64,
                    AttentionMode mode = AttentionMode::full, int threads = 1);

/// Mean BCE, accuracy and AUC (NaN when single-class) of a prediction set.
struct EvalSummary {
  double loss = 0.0;
  double acc = 0.0;
  double auc = 0.0;
  std::size_t count = 0;
};
EvalSummary summarize(const Predictions& predictions);

}  // namespace lbkt
