#pragma once

#include <filesystem>
#include <span>

#include "lbkt/dataset.hpp"
#include "lbkt/model.hpp"

namespace lbkt {

/// Question token embedding plus the Rasch term when the variant uses it;
/// the response and position terms are left out.
RowVector<float> question_embedding(const Model<float>& model, std::int32_t question, std::int32_t bucket);

struct ExportSummary {
  std::size_t rows = 0;
  std::size_t columns = 0;
};

/// TSV with a header row and one row per (question, bucket) pair seen in
/// `windows`: question id, bucket, the model's mean predicted probability
/// for that question over `windows`, then the d embedding values.
ExportSummary export_embeddings(const Model<float>& model, const Vocabulary& vocab, std::span<const Window> windows,
                                const std::filesystem::path& path, int batch_size = 64, int threads = 1);

}  // namespace lbkt
