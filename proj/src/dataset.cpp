#include "lbkt/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <numeric>

#include "lbkt/error.hpp"
#include "lbkt/random.hpp"

namespace lbkt {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// RFC 4180-style field split: quotes may wrap a field and "" escapes a quote.
// Embedded newlines inside quotes are not supported.
std::vector<std::string> split_csv_line(std::string_view line, char delimiter) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::optional<std::uint8_t> parse_correct(std::string_view s) {
  s = trim(s);
  if (s == "1") return 1;
  if (s == "0") return 0;
  return std::nullopt;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == name) return i;
  }
  throw Error("missing column '" + name + "' in interaction log header");
}

}  // namespace

CsvSchema CsvSchema::parse(std::string_view spec) {
  CsvSchema schema;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t end = std::min(spec.find(',', start), spec.size());
    const std::string_view item = trim(spec.substr(start, end - start));
    start = end + 1;
    if (item.empty()) {
      if (end == spec.size()) break;
      continue;
    }
    const std::size_t eq = item.find('=');
    if (eq == std::string_view::npos) throw ConfigError("schema", "expected key=column, got '" + std::string(item) + "'");
    const std::string key(trim(item.substr(0, eq)));
    const std::string value(trim(item.substr(eq + 1)));
    if (value.empty()) throw ConfigError("schema." + key, "empty column name");
    if (key == "student") {
      schema.student = value;
    } else if (key == "question") {
      schema.question = value;
    } else if (key == "correct") {
      schema.correct = value;
    } else if (key == "timestamp") {
      schema.timestamp = value;
    } else if (key == "concept") {
      schema.concept_id = value;
    } else if (key == "delimiter") {
      schema.delimiter = value == "tab" ? '\t' : value.front();
    } else {
      throw ConfigError("schema." + key, "unknown schema key");
    }
    if (end == spec.size()) break;
  }
  return schema;
}

ParseResult parse_interaction_log(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open interaction log '" + path.string() + "'");
  return parse_interaction_log(in, schema);
}

ParseResult parse_interaction_log(std::istream& in, const CsvSchema& schema) {
  ParseResult result;
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    result.warnings = 1;  // empty file
    return result;
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = split_csv_line(line, schema.delimiter);
  const std::size_t student_col = find_column(header, schema.student);
  const std::size_t question_col = find_column(header, schema.question);
  const std::size_t correct_col = find_column(header, schema.correct);
  const std::optional<std::size_t> time_col =
      schema.timestamp ? std::optional(find_column(header, *schema.timestamp)) : std::nullopt;
  const std::optional<std::size_t> concept_col =
      schema.concept_id ? std::optional(find_column(header, *schema.concept_id)) : std::nullopt;
  std::size_t max_col = std::max({student_col, question_col, correct_col});
  if (time_col) max_col = std::max(max_col, *time_col);
  if (concept_col) max_col = std::max(max_col, *concept_col);

  std::unordered_map<std::string, std::size_t> student_slot;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++result.rows_read;
    const auto fields = split_csv_line(line, schema.delimiter);
    if (fields.size() <= max_col) {
      ++result.skipped_rows;
      continue;
    }
    InteractionRecord record;
    record.student_id = std::string(trim(fields[student_col]));
    record.question_id = std::string(trim(fields[question_col]));
    const auto correct = parse_correct(fields[correct_col]);
    if (record.student_id.empty() || record.question_id.empty() || !correct) {
      ++result.skipped_rows;
      continue;
    }
    record.correct = *correct;
    if (time_col) {
      record.timestamp = parse_int(fields[*time_col]);
      if (!record.timestamp) {
        ++result.skipped_rows;
        continue;
      }
    }
    if (concept_col) {
      const auto concept_field = trim(fields[*concept_col]);
      if (!concept_field.empty()) record.concept_id = std::string(concept_field);
    }
    auto [it, inserted] = student_slot.try_emplace(record.student_id, result.sequences.size());
    if (inserted) result.sequences.push_back(RawSequence{record.student_id, {}});
    result.sequences[it->second].records.push_back(std::move(record));
  }

  if (time_col) {
    for (auto& seq : result.sequences) {
      std::stable_sort(seq.records.begin(), seq.records.end(),
                       [](const InteractionRecord& a, const InteractionRecord& b) { return *a.timestamp < *b.timestamp; });
    }
  }
  if (result.sequences.empty()) ++result.warnings;
  return result;
}

Vocabulary::Vocabulary(std::vector<std::string> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], static_cast<int>(i));
}

Vocabulary Vocabulary::build(std::span<const RawSequence> sequences) {
  std::vector<std::string> ids;
  for (const auto& seq : sequences) {
    for (const auto& r : seq.records) ids.push_back(r.question_id);
  }
  if (ids.empty()) throw Error("cannot build a vocabulary from an empty training set");
  return Vocabulary(std::move(ids));
}

bool Vocabulary::contains(std::string_view id) const { return index_.find(std::string(id)) != index_.end(); }

int Vocabulary::index_of(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? oov_index() : it->second;
}

std::vector<StudentSequence> encode_sequences(std::span<const RawSequence> raw, const Vocabulary& vocab) {
  std::vector<StudentSequence> out;
  out.reserve(raw.size());
  for (const auto& seq : raw) {
    if (seq.records.empty()) continue;
    StudentSequence s;
    s.student_id = seq.student_id;
    s.questions.reserve(seq.records.size());
    s.correct.reserve(seq.records.size());
    for (const auto& r : seq.records) {
      s.questions.push_back(vocab.index_of(r.question_id));
      s.correct.push_back(r.correct);
    }
    out.push_back(std::move(s));
  }
  return out;
}

DifficultyTable estimate_difficulty(std::span<const StudentSequence> train, int num_questions, int num_buckets) {
  if (num_buckets < 2) throw std::invalid_argument("difficulty needs at least 2 buckets");
  if (num_questions < 0) throw std::invalid_argument("negative question count");
  std::vector<std::int64_t> attempts(static_cast<std::size_t>(num_questions), 0);
  std::vector<std::int64_t> correct(static_cast<std::size_t>(num_questions), 0);
  for (const auto& seq : train) {
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const auto q = seq.questions[t];
      if (q < 0 || q >= num_questions) continue;  // sentinels carry no statistics
      ++attempts[static_cast<std::size_t>(q)];
      correct[static_cast<std::size_t>(q)] += seq.correct[t];
    }
  }
  DifficultyTable table;
  table.num_buckets = num_buckets;
  table.default_bucket = num_buckets / 2;
  table.buckets.assign(static_cast<std::size_t>(num_questions), table.default_bucket);
  for (std::size_t q = 0; q < attempts.size(); ++q) {
    const std::int64_t n = attempts[q];
    if (n == 0) continue;
    // (1 - p) * B with p = (c + 1) / (n + 2), in exact integer arithmetic.
    const std::int64_t scaled = (n + 1 - correct[q]) * num_buckets / (n + 2);
    table.buckets[q] = static_cast<std::int32_t>(std::min<std::int64_t>(scaled, num_buckets - 1));
  }
  return table;
}

std::string_view to_string(WindowPolicy policy) {
  return policy == WindowPolicy::slide ? "slide" : "truncate-last";
}

WindowPolicy parse_window_policy(std::string_view name) {
  if (name == "truncate-last" || name == "truncate_last") return WindowPolicy::truncate_last;
  if (name == "slide") return WindowPolicy::slide;
  throw ConfigError("window_policy", "unknown window policy '" + std::string(name) + "'");
}

namespace {

Window build_window(const StudentSequence& seq, std::int32_t student, std::size_t begin, std::size_t end,
                    const DifficultyTable& difficulty) {
  Window w;
  w.student = student;
  const std::size_t n = end - begin;
  w.questions.assign(seq.questions.begin() + static_cast<std::ptrdiff_t>(begin),
                     seq.questions.begin() + static_cast<std::ptrdiff_t>(end));
  w.labels.assign(seq.correct.begin() + static_cast<std::ptrdiff_t>(begin),
                  seq.correct.begin() + static_cast<std::ptrdiff_t>(end));
  w.prev_responses.resize(n);
  w.buckets.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    w.prev_responses[t] = t == 0 ? kStartResponse : w.labels[t - 1];
    w.buckets[t] = difficulty.bucket_of(w.questions[t]);
  }
  return w;
}

}  // namespace

std::vector<Window> make_windows(std::span<const StudentSequence> sequences, const DifficultyTable& difficulty,
                                 int max_len, WindowPolicy policy) {
  if (max_len < 1) throw std::invalid_argument("window length must be at least 1");
  const auto L = static_cast<std::size_t>(max_len);
  std::vector<Window> windows;
  windows.reserve(sequences.size());
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    const std::size_t n = seq.size();
    if (n == 0) continue;
    const auto student = static_cast<std::int32_t>(s);
    if (policy == WindowPolicy::truncate_last) {
      windows.push_back(build_window(seq, student, n > L ? n - L : 0, n, difficulty));
    } else {
      for (std::size_t begin = 0; begin < n; begin += L) {
        windows.push_back(build_window(seq, student, begin, std::min(begin + L, n), difficulty));
      }
    }
  }
  return windows;
}

int WindowedBatch::valid_extent(int b) const {
  for (int t = length; t > 0; --t) {
    if (valid_mask[offset(b, t - 1)]) return t;
  }
  return 0;
}

std::size_t WindowedBatch::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_mask.begin(), valid_mask.end(), std::uint8_t{1}));
}

WindowedBatch collate(std::span<const Window> windows, std::span<const std::size_t> order, int length,
                      std::int32_t pad_question) {
  if (length < 1) throw std::invalid_argument("batch length must be at least 1");
  WindowedBatch batch;
  batch.batch = static_cast<int>(order.size());
  batch.length = length;
  batch.pad_question = pad_question;
  const std::size_t cells = order.size() * static_cast<std::size_t>(length);
  batch.question_ids.assign(cells, pad_question);
  batch.prev_responses.assign(cells, kStartResponse);
  batch.difficulty_buckets.assign(cells, 0);
  batch.valid_mask.assign(cells, 0);
  batch.labels.assign(cells, 0);
  for (std::size_t b = 0; b < order.size(); ++b) {
    const Window& w = windows[order[b]];
    if (w.size() > static_cast<std::size_t>(length)) throw std::invalid_argument("window longer than batch length");
    for (std::size_t t = 0; t < w.size(); ++t) {
      const std::size_t o = batch.offset(static_cast<int>(b), static_cast<int>(t));
      batch.question_ids[o] = w.questions[t];
      batch.prev_responses[o] = w.prev_responses[t];
      batch.difficulty_buckets[o] = w.buckets[t];
      batch.valid_mask[o] = 1;
      batch.labels[o] = w.labels[t];
    }
  }
  return batch;
}

WindowedBatch collate(std::span<const Window> windows, int length, std::int32_t pad_question) {
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return collate(windows, order, length, pad_question);
}

std::vector<WindowedBatch> window_and_pad(std::span<const StudentSequence> sequences,
                                          const DifficultyTable& difficulty, int max_len, WindowPolicy policy,
                                          std::int32_t pad_question, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  const auto windows = make_windows(sequences, difficulty, max_len, policy);
  std::vector<WindowedBatch> batches;
  for (std::size_t begin = 0; begin < windows.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(windows.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> order(end - begin);
    std::iota(order.begin(), order.end(), begin);
    batches.push_back(collate(windows, order, max_len, pad_question));
  }
  return batches;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0xF01D));
  rng.shuffle(idx);
  return idx;
}

}  // namespace

std::vector<Fold> kfold_split(std::size_t num_students, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold split needs k >= 2");
  const auto folds_n = static_cast<std::size_t>(k);
  if (num_students < folds_n) {
    throw Error("cannot split " + std::to_string(num_students) + " students into " + std::to_string(k) + " folds");
  }
  const auto idx = shuffled_indices(num_students, seed);
  const std::size_t base = num_students / folds_n;
  const std::size_t extra = num_students % folds_n;
  std::vector<std::size_t> fold_of(num_students);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds_n; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) fold_of[idx[pos++]] = f;
  }
  std::vector<Fold> folds(folds_n);
  for (std::size_t s = 0; s < num_students; ++s) {
    // Ascending student order inside every side keeps downstream work stable.
    for (std::size_t f = 0; f < folds_n; ++f) (fold_of[s] == f ? folds[f].test : folds[f].train).push_back(s);
  }
  return folds;
}

Fold train_test_split(std::size_t num_students, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("test fraction must be in (0, 1)");
  if (num_students < 2) throw Error("need at least 2 students for a train/test split");
  const auto idx = shuffled_indices(num_students, seed);
  auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(num_students) * test_fraction));
  n_test = std::clamp<std::size_t>(n_test, 1, num_students - 1);
  Fold fold;
  fold.test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  fold.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(fold.test.begin(), fold.test.end());
  std::sort(fold.train.begin(), fold.train.end());
  return fold;
}

CohortSelection select_cohorts(std::span<const StudentSequence> sequences, const DifficultyTable& difficulty,
                               const CohortOptions& options) {
  CohortSelection out;
  for (std::size_t i = 0; i < sequences.size() && out.long_subset.size() < options.n_long; ++i) {
    if (sequences[i].size() > options.min_len) out.long_subset.push_back(i);
  }
  if (out.long_subset.size() < options.n_long) {
    out.warnings.push_back("long subset has " + std::to_string(out.long_subset.size()) + " of " +
                           std::to_string(options.n_long) + " requested sequences longer than " +
                           std::to_string(options.min_len));
  }

  for (const int target : options.targets) {
    if (target < 1) throw std::invalid_argument("cohort target must be positive");
    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto distance = [&](std::size_t i) {
      const auto len = static_cast<long long>(sequences[i].size());
      return std::llabs(len - target);
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distance(a) < distance(b); });
    Cohort cohort;
    cohort.target = target;
    const std::size_t take = std::min(options.per_cohort, order.size());
    cohort.members.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(cohort.members.begin(), cohort.members.end());
    for (const std::size_t m : cohort.members) {
      // Pruning keeps the most recent `target` steps.
      auto w = make_windows(sequences.subspan(m, 1), difficulty, target, WindowPolicy::truncate_last);
      w.front().student = static_cast<std::int32_t>(m);
      cohort.windows.push_back(std::move(w.front()));
    }
    if (take < options.per_cohort) {
      out.warnings.push_back("cohort " + std::to_string(target) + " has only " + std::to_string(take) + " sequences");
    }
    out.cohorts.push_back(std::move(cohort));
  }
  return out;
}

}  // namespace lbkt
