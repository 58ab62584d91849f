#include "lbkt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lbkt/loss.hpp"

namespace lbkt {

namespace {

bool counts(std::span<const std::uint8_t> valid, std::size_t i) { return valid.empty() || valid[i] != 0; }

void check_sizes(std::size_t n, std::size_t labels, std::span<const std::uint8_t> valid) {
  if (labels != n) throw std::invalid_argument("scores and labels differ in length");
  if (!valid.empty() && valid.size() != n) throw std::invalid_argument("mask and scores differ in length");
}

}  // namespace

double accuracy(std::span<const double> probs, std::span<const std::uint8_t> labels,
                std::span<const std::uint8_t> valid, double threshold) {
  check_sizes(probs.size(), labels.size(), valid);
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!counts(valid, i)) continue;
    ++total;
    const bool predicted = probs[i] >= threshold;
    if (predicted == (labels[i] != 0)) ++hits;
  }
  if (total == 0) throw Error("accuracy of an empty prediction set");
  return static_cast<double>(hits) / static_cast<double>(total);
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels,
           std::span<const std::uint8_t> valid) {
  check_sizes(scores.size(), labels.size(), valid);
  std::vector<std::size_t> idx;
  idx.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (counts(valid, i)) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    // Ranks i+1 .. j, averaged over the tie group.
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]]) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = idx.size() - positives;
  if (positives == 0 || negatives == 0) throw UndefinedMetric("AUC is undefined when only one class is present");
  const auto p = static_cast<double>(positives);
  const auto n = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

template <typename T>
Predictions predict(const Model<T>& model, std::span<const Window> windows, int batch_size, AttentionMode mode,
                    int threads) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
  Predictions out;
  const std::int32_t pad = model.config().pad_question();
  for (std::size_t begin = 0; begin < windows.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(windows.size(), begin + static_cast<std::size_t>(batch_size));
    const auto slice = windows.subspan(begin, end - begin);
    std::size_t longest = 0;
    for (const auto& w : slice) longest = std::max(longest, w.size());
    if (longest == 0) continue;
    const WindowedBatch batch = collate(slice, static_cast<int>(longest), pad);
    const Matrix<T> logits = model_forward(batch, model, mode, {}, threads);
    for (int b = 0; b < batch.batch; ++b) {
      const int extent = batch.valid_extent(b);
      if (extent == 0) continue;
      const auto emit = [&](int t, double z) {
        const std::size_t o = batch.offset(b, t);
        out.logits.push_back(z);
        out.probs.push_back(sigmoid(z));
        out.labels.push_back(batch.labels[o]);
        out.questions.push_back(batch.question_ids[o]);
        out.buckets.push_back(batch.difficulty_buckets[o]);
      };
      if (mode == AttentionMode::last_query) {
        emit(extent - 1, static_cast<double>(logits(b, 0)));
      } else {
        for (int t = 0; t < extent; ++t) {
          if (batch.valid_mask[batch.offset(b, t)]) emit(t, static_cast<double>(logits(b, t)));
        }
      }
    }
  }
  return out;
}

EvalSummary summarize(const Predictions& p) {
  EvalSummary s;
  s.count = p.size();
  if (s.count == 0) throw Error("no predictions to summarize");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) loss += bce_term(p.logits[i], p.labels[i]);
  s.loss = loss / static_cast<double>(s.count);
  s.acc = accuracy(p.probs, p.labels);
  try {
    s.auc = auc(p.probs, p.labels);
  } catch (const UndefinedMetric&) {
    s.auc = std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

template Predictions predict<float>(const Model<float>&, std::span<const Window>, int, AttentionMode, int);
template Predictions predict<double>(const Model<double>&, std::span<const Window>, int, AttentionMode, int);

}  // namespace lbkt
