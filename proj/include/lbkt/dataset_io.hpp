#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lbkt/dataset.hpp"

namespace lbkt {

/// Windowed dataset as stored on disk: flat little-endian arrays
/// (question_ids.i32, prev_responses.i32, difficulty_buckets.i32,
/// valid_mask.u8, labels.u8, all [N, L]; student_index.i32 [N]) plus
/// manifest.json with shapes, sentinels, vocabulary and difficulty table.
struct WindowedDataset {
  std::string name;
  Vocabulary vocab;
  DifficultyTable difficulty;
  std::vector<std::string> student_ids;
  std::vector<Window> windows;
  int length = 200;
  WindowPolicy policy = WindowPolicy::truncate_last;
};

/// Builds windows over the whole corpus with a vocabulary and difficulty
/// table fitted to all of it (per-split tables are rebuilt at train time).
WindowedDataset build_windowed_dataset(std::span<const RawSequence> corpus, int length, WindowPolicy policy,
                                       int num_buckets = 10, std::string name = "dataset");

void save_windowed_dataset(const WindowedDataset& dataset, const std::filesystem::path& dir);
WindowedDataset load_windowed_dataset(const std::filesystem::path& dir);

/// Reassembles per-student string-id sequences (windows of one student are
/// concatenated in order), so splits can refit vocabulary and difficulty.
std::vector<RawSequence> to_raw_sequences(const WindowedDataset& dataset);

}  // namespace lbkt
