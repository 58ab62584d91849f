#include "lbkt/export.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include "lbkt/error.hpp"
#include "lbkt/metrics.hpp"

namespace lbkt {

RowVector<float> question_embedding(const Model<float>& model, std::int32_t question, std::int32_t bucket) {
  const auto& e = model.params().embedding;
  if (question < 0 || question >= e.question.rows()) throw std::out_of_range("question index outside the table");
  RowVector<float> out = e.question.row(question);
  if (model.config().use_rasch()) {
    if (bucket < 0 || bucket >= e.difficulty.rows()) throw std::out_of_range("bucket outside the difficulty table");
    out += rasch_combine<float>(e.difficulty.row(bucket), e.question.row(question));
  }
  return out;
}

ExportSummary export_embeddings(const Model<float>& model, const Vocabulary& vocab, std::span<const Window> windows,
                                const std::filesystem::path& path, int batch_size, int threads) {
  const Predictions preds = predict(model, windows, batch_size, AttentionMode::full, threads);
  std::map<std::int32_t, std::pair<double, std::size_t>> per_question;
  std::map<std::pair<std::int32_t, std::int32_t>, bool> pairs;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto& acc = per_question[preds.questions[i]];
    acc.first += preds.probs[i];
    ++acc.second;
    pairs[{preds.questions[i], preds.buckets[i]}] = true;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write embedding export " + path.string());
  const int d = model.config().encoder.d_model;
  out << "question_id\tbucket\tmean_prob";
  for (int k = 0; k < d; ++k) out << "\tdim_" << k;
  out << '\n';
  ExportSummary summary;
  summary.columns = 3 + static_cast<std::size_t>(d);
  char buf[32];
  for (const auto& [key, present] : pairs) {
    const auto [q, bucket] = key;
    const std::string id = q < vocab.size() ? vocab.id_at(q) : std::string("<oov>");
    const auto& [sum, count] = per_question.at(q);
    std::snprintf(buf, sizeof buf, "%.9g", sum / static_cast<double>(count));
    out << id << '\t' << bucket << '\t' << buf;
    const RowVector<float> e = question_embedding(model, q, bucket);
    for (int k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(e(k)));
      out << '\t' << buf;
    }
    out << '\n';
    ++summary.rows;
  }
  if (!out) throw Error("failed while writing " + path.string());
  return summary;
}

}  // namespace lbkt
