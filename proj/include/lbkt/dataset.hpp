#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lbkt {

/// Response-table row used for "no previous response" at window starts.
inline constexpr std::int32_t kStartResponse = 2;
inline constexpr int kNumResponseTokens = 3;

struct InteractionRecord {
  std::string student_id;
  std::string question_id;
  std::optional<std::string> concept_id;
  std::uint8_t correct = 0;
  std::optional<std::int64_t> timestamp;
};

/// One student's records with opaque string ids, time-ordered.
struct RawSequence {
  std::string student_id;
  std::vector<InteractionRecord> records;
};

/// Column names for a CSV interaction log.
struct CsvSchema {
  std::string student = "student_id";
  std::string question = "question_id";
  std::string correct = "correct";
  std::optional<std::string> timestamp;
  std::optional<std::string> concept_id;
  char delimiter = ',';

  /// Parses "student=user_id,question=item,correct=ok,timestamp=ts".
  /// Unknown keys throw ConfigError.
  static CsvSchema parse(std::string_view spec);
};

struct ParseResult {
  std::vector<RawSequence> sequences;
  std::size_t rows_read = 0;
  std::size_t skipped_rows = 0;
  std::size_t warnings = 0;
};

/// Reads a headered CSV log. Students appear in first-seen order; within a
/// student, records are stably sorted by timestamp when a timestamp column
/// is configured. Rows with unparsable fields are skipped and counted.
ParseResult parse_interaction_log(const std::filesystem::path& path, const CsvSchema& schema);
ParseResult parse_interaction_log(std::istream& in, const CsvSchema& schema);

/// Dense question index built from training data. Indices [0, Q) are real
/// questions in lexicographic id order; Q is PAD and Q + 1 is OOV.
class Vocabulary {
 public:
  Vocabulary() = default;
  /// `ids` need not be sorted or unique.
  explicit Vocabulary(std::vector<std::string> ids);

  static Vocabulary build(std::span<const RawSequence> sequences);

  int size() const { return static_cast<int>(ids_.size()); }
  int pad_index() const { return size(); }
  int oov_index() const { return size() + 1; }
  /// Rows needed by an embedding table: real questions plus PAD and OOV.
  int table_rows() const { return size() + 2; }

  bool contains(std::string_view id) const;
  /// OOV index for ids not seen at build time.
  int index_of(std::string_view id) const;
  const std::string& id_at(int index) const { return ids_.at(static_cast<std::size_t>(index)); }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> index_;
};

/// A student's history mapped through a vocabulary.
struct StudentSequence {
  std::string student_id;
  std::vector<std::int32_t> questions;
  std::vector<std::uint8_t> correct;

  std::size_t size() const { return questions.size(); }
};

std::vector<StudentSequence> encode_sequences(std::span<const RawSequence> raw, const Vocabulary& vocab);

/// Per-question difficulty bucket in [0, B); higher bucket = harder.
struct DifficultyTable {
  int num_buckets = 10;
  int default_bucket = 5;
  std::vector<std::int32_t> buckets;

  /// Default bucket for indices outside the table (PAD, OOV, unseen).
  std::int32_t bucket_of(std::int32_t question) const {
    if (question < 0 || static_cast<std::size_t>(question) >= buckets.size()) return default_bucket;
    return buckets[static_cast<std::size_t>(question)];
  }
};

/// Laplace-smoothed correct rate p = (c + 1) / (n + 2), bucketed as
/// min(floor((1 - p) * B), B - 1). Questions never attempted get floor(B / 2).
DifficultyTable estimate_difficulty(std::span<const StudentSequence> train, int num_questions, int num_buckets = 10);

enum class WindowPolicy { truncate_last, slide };

std::string_view to_string(WindowPolicy policy);
WindowPolicy parse_window_policy(std::string_view name);

/// Unpadded model input for one window of one student.
struct Window {
  std::int32_t student = 0;
  std::vector<std::int32_t> questions;
  std::vector<std::int32_t> prev_responses;
  std::vector<std::int32_t> buckets;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return questions.size(); }
};

/// truncate_last keeps the most recent `max_len` steps; slide emits
/// consecutive non-overlapping windows. Each window starts with START.
std::vector<Window> make_windows(std::span<const StudentSequence> sequences, const DifficultyTable& difficulty,
                                 int max_len, WindowPolicy policy = WindowPolicy::truncate_last);

/// Fixed-shape padded batch, row-major [batch, length].
struct WindowedBatch {
  int batch = 0;
  int length = 0;
  std::int32_t pad_question = 0;
  std::vector<std::int32_t> question_ids;
  std::vector<std::int32_t> prev_responses;
  std::vector<std::int32_t> difficulty_buckets;
  std::vector<std::uint8_t> valid_mask;
  std::vector<std::uint8_t> labels;

  std::size_t offset(int b, int t) const {
    return static_cast<std::size_t>(b) * static_cast<std::size_t>(length) + static_cast<std::size_t>(t);
  }
  std::span<const std::uint8_t> valid_row(int b) const {
    return {valid_mask.data() + offset(b, 0), static_cast<std::size_t>(length)};
  }
  /// One past the last valid position of row b (0 for an all-padding row).
  int valid_extent(int b) const;
  std::size_t valid_count() const;
};

/// Right-pads the selected windows to `length` (every window must fit).
WindowedBatch collate(std::span<const Window> windows, std::span<const std::size_t> order, int length,
                      std::int32_t pad_question);
WindowedBatch collate(std::span<const Window> windows, int length, std::int32_t pad_question);

/// make_windows followed by collation into batches of at most `batch_size`.
std::vector<WindowedBatch> window_and_pad(std::span<const StudentSequence> sequences,
                                          const DifficultyTable& difficulty, int max_len, WindowPolicy policy,
                                          std::int32_t pad_question, int batch_size = 64);

/// Student-level partition; indices refer to the caller's student list.
struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// k disjoint test folds; the first (n mod k) folds hold one extra student.
std::vector<Fold> kfold_split(std::size_t num_students, int k, std::uint64_t seed);
/// Seeded shuffle then a single split; test gets round(n * test_fraction), at least 1.
Fold train_test_split(std::size_t num_students, double test_fraction, std::uint64_t seed);

struct CohortOptions {
  std::size_t min_len = 100;
  std::size_t n_long = 200;
  std::vector<int> targets = {100, 200, 300, 400};
  std::size_t per_cohort = 50;
};

struct Cohort {
  int target = 0;
  std::vector<std::size_t> members;
  /// Members pruned to their most recent `target` steps; collate with
  /// length = target to pad the shorter ones.
  std::vector<Window> windows;
};

struct CohortSelection {
  std::vector<std::size_t> long_subset;
  std::vector<Cohort> cohorts;
  std::vector<std::string> warnings;
};

/// Long subset: the first n_long sequences longer than min_len, in input
/// order. Each cohort takes the per_cohort sequences whose lengths are
/// closest to its target (ties by input order).
CohortSelection select_cohorts(std::span<const StudentSequence> sequences, const DifficultyTable& difficulty,
                               const CohortOptions& options = {});

}  // namespace lbkt
