#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "lbkt/dataset.hpp"
#include "lbkt/dataset_io.hpp"
#include "lbkt/error.hpp"
#include "lbkt/random.hpp"
#include "lbkt/synthetic.hpp"
#include "lbkt/trainer.hpp"

using namespace lbkt;

namespace {

ParseResult parse(const std::string& text, const std::string& schema = "") {
  std::istringstream in(text);
  return parse_interaction_log(in, schema.empty() ? CsvSchema{} : CsvSchema::parse(schema));
}

StudentSequence seq_of(std::vector<std::int32_t> q, std::vector<std::uint8_t> c, std::string id = "s") {
  return StudentSequence{std::move(id), std::move(q), std::move(c)};
}

std::vector<StudentSequence> random_sequences(Rng& rng, int n, int q, int max_len) {
  std::vector<StudentSequence> out;
  for (int s = 0; s < n; ++s) {
    StudentSequence seq;
    seq.student_id = "s" + std::to_string(s);
    const auto len = 1 + rng.below(static_cast<std::uint64_t>(max_len));
    for (std::uint64_t t = 0; t < len; ++t) {
      seq.questions.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(q))));
      seq.correct.push_back(static_cast<std::uint8_t>(rng.below(2)));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("one student, three rows") {
  const auto r = parse("student_id,question_id,correct\nu1,q1,1\nu1,q2,0\nu1,q3,1\n");
  REQUIRE(r.sequences.size() == 1);
  std::vector<int> responses;
  for (const auto& rec : r.sequences[0].records) responses.push_back(rec.correct);
  CHECK(responses == std::vector<int>{1, 0, 1});
  CHECK(r.skipped_rows == 0);
}

TEST_CASE("interleaved students are split and time-ordered") {
  const auto r = parse("user,item,ok,ts\na,q1,1,30\nb,q2,0,10\na,q3,0,20\nb,q4,1,5\na,q5,1,20\n",
                       "student=user,question=item,correct=ok,timestamp=ts");
  REQUIRE(r.sequences.size() == 2);
  CHECK(r.sequences[0].student_id == "a");
  std::vector<std::string> a, b;
  for (const auto& rec : r.sequences[0].records) a.push_back(rec.question_id);
  for (const auto& rec : r.sequences[1].records) b.push_back(rec.question_id);
  // q3 and q5 share a timestamp and keep file order.
  CHECK(a == std::vector<std::string>{"q3", "q5", "q1"});
  CHECK(b == std::vector<std::string>{"q4", "q2"});
}

TEST_CASE("unparsable correct value skips the row") {
  const auto r = parse("student_id,question_id,correct\nu,q1,1\nu,q2,yes\nu,q3,0\n");
  CHECK(r.skipped_rows == 1);
  REQUIRE(r.sequences.size() == 1);
  CHECK(r.sequences[0].records.size() == 2);
}

TEST_CASE("missing mandatory column names the column") {
  try {
    parse("student_id,item,correct\nu,q1,1\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("question_id") != std::string::npos);
  }
}

TEST_CASE("empty file yields no sequences and a warning") {
  const auto r = parse("");
  CHECK(r.sequences.empty());
  CHECK(r.warnings >= 1);
}

TEST_CASE("unknown schema key is a configuration error") {
  CHECK_THROWS_AS(CsvSchema::parse("student=a,colour=b"), ConfigError);
}

TEST_CASE("vocabulary is lexicographic and deduplicated") {
  std::vector<RawSequence> raw(2);
  raw[0].records = {{"a", "q7", {}, 1, {}}, {"a", "q2", {}, 0, {}}};
  raw[1].records = {{"b", "q2", {}, 1, {}}};
  const Vocabulary v = Vocabulary::build(raw);
  CHECK(v.size() == 2);
  CHECK(v.index_of("q2") == 0);
  CHECK(v.index_of("q7") == 1);
  CHECK(v.pad_index() == 2);
  CHECK(v.index_of("never") == v.oov_index());

  std::vector<RawSequence> single(1);
  single[0].records = {{"a", "only", {}, 1, {}}};
  CHECK(Vocabulary::build(single).size() == 1);
  CHECK(Vocabulary::build(single).index_of("only") == 0);
  CHECK_THROWS(Vocabulary::build(std::vector<RawSequence>{}));
}

TEST_CASE("difficulty buckets from smoothed correct rates") {
  // question 0: 3 of 4 correct; question 1: 0 of 2; question 2 unseen.
  const std::vector<StudentSequence> train = {seq_of({0, 0, 1}, {1, 1, 0}), seq_of({0, 1, 0}, {0, 0, 1})};
  const DifficultyTable t = estimate_difficulty(train, 3, 10);
  CHECK(t.bucket_of(0) == 3);
  CHECK(t.bucket_of(1) == 7);
  CHECK(t.bucket_of(2) == 5);
  CHECK(t.default_bucket == 5);
  CHECK(t.bucket_of(99) == 5);
}

TEST_CASE("difficulty buckets stay in range") {
  Rng rng(5);
  const auto seqs = random_sequences(rng, 40, 30, 60);
  for (int b : {2, 3, 10, 17}) {
    const DifficultyTable t = estimate_difficulty(seqs, 30, b);
    for (auto v : t.buckets) {
      CHECK(v >= 0);
      CHECK(v < b);
    }
  }
}

TEST_CASE("short sequence is right-padded") {
  const std::vector<StudentSequence> s = {seq_of({0, 1, 2}, {1, 0, 1})};
  const DifficultyTable t = estimate_difficulty(s, 3);
  const auto batches = window_and_pad(s, t, 5, WindowPolicy::truncate_last, 3);
  REQUIRE(batches.size() == 1);
  const auto& b = batches[0];
  CHECK(b.valid_mask == std::vector<std::uint8_t>{1, 1, 1, 0, 0});
  CHECK(b.question_ids[3] == 3);
  CHECK(b.question_ids[4] == 3);
  CHECK(b.prev_responses[0] == kStartResponse);
  CHECK(b.prev_responses[1] == 1);
  CHECK(b.prev_responses[2] == 0);
}

TEST_CASE("truncate_last keeps the most recent steps") {
  const std::vector<StudentSequence> s = {seq_of({0, 1, 2, 3, 4, 5, 6}, {1, 1, 0, 0, 1, 0, 1})};
  const DifficultyTable t = estimate_difficulty(s, 7);
  const auto w = make_windows(s, t, 5, WindowPolicy::truncate_last);
  REQUIRE(w.size() == 1);
  CHECK(w[0].questions == std::vector<std::int32_t>{2, 3, 4, 5, 6});
  CHECK(w[0].prev_responses.front() == kStartResponse);
}

TEST_CASE("shifted responses for a full window") {
  const std::vector<StudentSequence> s = {seq_of({0, 1, 2}, {1, 0, 1})};
  const auto w = make_windows(s, estimate_difficulty(s, 3), 3);
  CHECK(w[0].prev_responses == std::vector<std::int32_t>{kStartResponse, 1, 0});
  CHECK(w[0].labels == std::vector<std::uint8_t>{1, 0, 1});
}

TEST_CASE("slide windows cover the sequence without overlap") {
  const std::vector<StudentSequence> s = {seq_of({0, 1, 2, 3, 4, 5, 6}, {1, 1, 0, 0, 1, 0, 1})};
  const auto w = make_windows(s, estimate_difficulty(s, 7), 3, WindowPolicy::slide);
  REQUIRE(w.size() == 3);
  CHECK(w[0].questions == std::vector<std::int32_t>{0, 1, 2});
  CHECK(w[2].questions == std::vector<std::int32_t>{6});
  CHECK(w[1].prev_responses.front() == kStartResponse);
}

TEST_CASE("windowed batches: shift, padding and recovery properties") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto seqs = random_sequences(rng, 15, 12, 40);
    const DifficultyTable t = estimate_difficulty(seqs, 12);
    const int L = 1 + static_cast<int>(rng.below(30));
    const auto batches = window_and_pad(seqs, t, L, WindowPolicy::truncate_last, 12, 4);
    std::size_t row = 0;
    for (const auto& b : batches) {
      CHECK(b.length == L);
      CHECK(b.question_ids.size() == static_cast<std::size_t>(b.batch * L));
      CHECK(b.labels.size() == b.question_ids.size());
      for (int r = 0; r < b.batch; ++r, ++row) {
        const auto& src = seqs[row];
        const std::size_t keep = std::min<std::size_t>(src.size(), static_cast<std::size_t>(L));
        for (int t2 = 0; t2 < L; ++t2) {
          const auto o = b.offset(r, t2);
          if (static_cast<std::size_t>(t2) < keep) {
            const std::size_t s = src.size() - keep + static_cast<std::size_t>(t2);
            CHECK(b.valid_mask[o] == 1);
            CHECK(b.question_ids[o] == src.questions[s]);
            CHECK(b.labels[o] == src.correct[s]);
            CHECK(b.prev_responses[o] == (t2 == 0 ? kStartResponse : b.labels[o - 1]));
          } else {
            CHECK(b.valid_mask[o] == 0);
            CHECK(b.question_ids[o] == 12);
          }
        }
      }
    }
    CHECK(row == seqs.size());
  }
}

TEST_CASE("kfold sizes and determinism") {
  auto ten = kfold_split(10, 5, 3);
  for (const auto& f : ten) CHECK(f.test.size() == 2);
  std::vector<std::size_t> sizes;
  for (const auto& f : kfold_split(11, 5, 3)) sizes.push_back(f.test.size());
  CHECK(sizes == std::vector<std::size_t>{3, 2, 2, 2, 2});
  const auto again = kfold_split(10, 5, 3);
  for (std::size_t i = 0; i < ten.size(); ++i) CHECK(ten[i].test == again[i].test);
  CHECK_THROWS(kfold_split(4, 5, 1));
  CHECK_THROWS(kfold_split(10, 1, 1));
}

TEST_CASE("kfold test folds partition the students") {
  Rng rng(2);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 5 + rng.below(60);
    const int k = 2 + static_cast<int>(rng.below(std::min<std::uint64_t>(n - 1, 8)));
    const auto folds = kfold_split(n, k, rng.next());
    std::multiset<std::size_t> seen;
    for (const auto& f : folds) {
      seen.insert(f.test.begin(), f.test.end());
      CHECK(f.train.size() + f.test.size() == n);
      for (std::size_t s : f.test) CHECK(!std::binary_search(f.train.begin(), f.train.end(), s));
    }
    CHECK(seen.size() == n);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == n);
  }
}

TEST_CASE("training-side structures never see test students") {
  // Test students answer only their own questions. On the training side q1
  // is always answered correctly except by the validation student.
  const auto correct_of = [](std::size_t s, int t) -> std::uint8_t {
    if (s >= 4) return 1;
    return (t % 3 == 1) == (s != 3) ? 1 : 0;
  };
  std::vector<RawSequence> corpus(6);
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    corpus[s].student_id = "u" + std::to_string(s);
    const bool held_out = s >= 4;
    for (int t = 0; t < 6; ++t) {
      const std::string q = held_out ? "test_q" + std::to_string(t % 2) : "q" + std::to_string(t % 3);
      corpus[s].records.push_back({corpus[s].student_id, q, {}, correct_of(s, t), {}});
    }
  }
  const std::vector<std::size_t> train = {0, 1, 2}, val = {3}, test = {4, 5};
  const SplitData split = prepare_split(corpus, train, val, test, 10, WindowPolicy::truncate_last, 10);
  CHECK(split.vocab.ids() == std::vector<std::string>{"q0", "q1", "q2"});
  CHECK(!split.vocab.contains("test_q0"));
  for (const auto& w : split.test) {
    for (auto q : w.questions) CHECK(q == split.vocab.oov_index());
    for (auto b : w.buckets) CHECK(b == split.difficulty.default_bucket);
    CHECK(w.student >= 4);
  }
  // Difficulty comes from students 0..2 only: 6 of 6 correct on q1.
  CHECK(split.difficulty.bucket_of(split.vocab.index_of("q1")) == 1);
  CHECK(split.train.size() == 3);
  CHECK(split.val.size() == 1);
}

TEST_CASE("long subset and cohorts") {
  std::vector<StudentSequence> seqs;
  for (int len : {80, 150, 350, 900, 120, 101, 460}) {
    seqs.push_back(seq_of(std::vector<std::int32_t>(static_cast<std::size_t>(len), 0),
                          std::vector<std::uint8_t>(static_cast<std::size_t>(len), 1)));
  }
  const DifficultyTable t = estimate_difficulty(seqs, 1);
  CohortOptions o;
  o.n_long = 3;
  o.per_cohort = 2;
  o.targets = {400};
  const auto sel = select_cohorts(seqs, t, o);
  CHECK(sel.long_subset == std::vector<std::size_t>{1, 2, 3});
  REQUIRE(sel.cohorts.size() == 1);
  const auto& c = sel.cohorts[0];
  // 350 and 460 are closest to 400; 460 is pruned, 350 padded.
  CHECK(c.members == std::vector<std::size_t>{2, 6});
  const WindowedBatch b = collate(c.windows, 400, 1);
  CHECK(b.length == 400);
  CHECK(b.valid_extent(0) == 350);
  CHECK(b.valid_extent(1) == 400);

  CHECK(c.windows[1].questions.size() == 400);
  o.n_long = 10;
  CHECK(!select_cohorts(seqs, t, o).warnings.empty());
}

TEST_CASE("windowed dataset round-trips through disk") {
  SyntheticIrtOptions o;
  o.students = 30;
  o.questions = 12;
  o.min_length = 3;
  o.max_length = 25;
  const auto data = generate_irt(o);
  const WindowedDataset ds = build_windowed_dataset(data.sequences, 10, WindowPolicy::slide, 10, "tiny");
  const auto dir = std::filesystem::temp_directory_path() / "lbkt_dataset_roundtrip";
  std::filesystem::remove_all(dir);
  save_windowed_dataset(ds, dir);
  const WindowedDataset back = load_windowed_dataset(dir);
  CHECK(back.name == "tiny");
  CHECK(back.vocab.ids() == ds.vocab.ids());
  CHECK(back.difficulty.buckets == ds.difficulty.buckets);
  REQUIRE(back.windows.size() == ds.windows.size());
  for (std::size_t i = 0; i < ds.windows.size(); ++i) {
    CHECK(back.windows[i].questions == ds.windows[i].questions);
    CHECK(back.windows[i].labels == ds.windows[i].labels);
    CHECK(back.windows[i].prev_responses == ds.windows[i].prev_responses);
    CHECK(back.windows[i].student == ds.windows[i].student);
  }
  // Sliding windows keep whole histories, so the corpus is recoverable.
  const auto raw = to_raw_sequences(back);
  REQUIRE(raw.size() == data.sequences.size());
  for (std::size_t s = 0; s < raw.size(); ++s) {
    REQUIRE(raw[s].records.size() == data.sequences[s].records.size());
    for (std::size_t t2 = 0; t2 < raw[s].records.size(); ++t2) {
      CHECK(raw[s].records[t2].question_id == data.sequences[s].records[t2].question_id);
      CHECK(raw[s].records[t2].correct == data.sequences[s].records[t2].correct);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic generator is seeded and within bounds") {
  SyntheticIrtOptions o;
  o.students = 50;
  o.questions = 20;
  o.min_length = 5;
  o.max_length = 9;
  const auto a = generate_irt(o);
  const auto b = generate_irt(o);
  REQUIRE(a.sequences.size() == 50);
  for (std::size_t s = 0; s < a.sequences.size(); ++s) {
    const auto n = a.sequences[s].records.size();
    CHECK(n >= 5);
    CHECK(n <= 9);
    for (std::size_t t2 = 0; t2 < n; ++t2) CHECK(a.sequences[s].records[t2].correct == b.sequences[s].records[t2].correct);
  }
}

}  // TEST_SUITE
