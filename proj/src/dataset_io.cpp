#include "lbkt/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lbkt/error.hpp"

namespace lbkt {

namespace {

using nlohmann::json;

template <typename U>
void write_array(const std::filesystem::path& path, const std::vector<U>& values) {
  static_assert(std::endian::native == std::endian::little, "on-disk arrays are little-endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(U)));
  if (!out) throw Error("short write to '" + path.string() + "'");
}

template <typename U>
std::vector<U> read_array(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  std::vector<U> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(U)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(U))) {
    throw Error("array file '" + path.string() + "' is shorter than its manifest shape");
  }
  return values;
}

}  // namespace

WindowedDataset build_windowed_dataset(std::span<const RawSequence> corpus, int length, WindowPolicy policy,
                                       int num_buckets, std::string name) {
  WindowedDataset ds;
  ds.name = std::move(name);
  ds.length = length;
  ds.policy = policy;
  ds.vocab = Vocabulary::build(corpus);
  const auto encoded = encode_sequences(corpus, ds.vocab);
  ds.difficulty = estimate_difficulty(encoded, ds.vocab.size(), num_buckets);
  ds.student_ids.reserve(encoded.size());
  for (const auto& s : encoded) ds.student_ids.push_back(s.student_id);
  ds.windows = make_windows(encoded, ds.difficulty, length, policy);
  return ds;
}

void save_windowed_dataset(const WindowedDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto n = ds.windows.size();
  const auto L = static_cast<std::size_t>(ds.length);
  const auto batch = collate(ds.windows, ds.length, ds.vocab.pad_index());
  std::vector<std::int32_t> student_index(n);
  for (std::size_t i = 0; i < n; ++i) student_index[i] = ds.windows[i].student;

  write_array(dir / "question_ids.i32", batch.question_ids);
  write_array(dir / "prev_responses.i32", batch.prev_responses);
  write_array(dir / "difficulty_buckets.i32", batch.difficulty_buckets);
  write_array(dir / "valid_mask.u8", batch.valid_mask);
  write_array(dir / "labels.u8", batch.labels);
  write_array(dir / "student_index.i32", student_index);

  const auto grid = json::array({n, L});
  json manifest = {
      {"format", "lbkt-windows"},
      {"version", 1},
      {"name", ds.name},
      {"num_windows", n},
      {"length", L},
      {"policy", to_string(ds.policy)},
      {"endianness", "little"},
      {"sentinels",
       {{"pad_question", ds.vocab.pad_index()},
        {"oov_question", ds.vocab.oov_index()},
        {"start_response", kStartResponse},
        {"pad_response", kStartResponse},
        {"pad_bucket", 0}}},
      {"arrays",
       {{"question_ids", {{"file", "question_ids.i32"}, {"dtype", "int32"}, {"shape", grid}}},
        {"prev_responses", {{"file", "prev_responses.i32"}, {"dtype", "int32"}, {"shape", grid}}},
        {"difficulty_buckets", {{"file", "difficulty_buckets.i32"}, {"dtype", "int32"}, {"shape", grid}}},
        {"valid_mask", {{"file", "valid_mask.u8"}, {"dtype", "uint8"}, {"shape", grid}}},
        {"labels", {{"file", "labels.u8"}, {"dtype", "uint8"}, {"shape", grid}}},
        {"student_index", {{"file", "student_index.i32"}, {"dtype", "int32"}, {"shape", json::array({n})}}}}},
      {"vocabulary", ds.vocab.ids()},
      {"difficulty",
       {{"num_buckets", ds.difficulty.num_buckets},
        {"default_bucket", ds.difficulty.default_bucket},
        {"buckets", ds.difficulty.buckets}}},
      {"students", ds.student_ids},
  };
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in '" + dir.string() + "'");
  out << manifest.dump(2) << '\n';
}

WindowedDataset load_windowed_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error("no manifest.json in '" + dir.string() + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw Error("malformed manifest.json: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "lbkt-windows") throw Error("'" + dir.string() + "' is not a windowed dataset");

  WindowedDataset ds;
  ds.name = manifest.value("name", "dataset");
  ds.length = manifest.at("length").get<int>();
  ds.policy = parse_window_policy(manifest.at("policy").get<std::string>());
  ds.vocab = Vocabulary(manifest.at("vocabulary").get<std::vector<std::string>>());
  const auto& diff = manifest.at("difficulty");
  ds.difficulty.num_buckets = diff.at("num_buckets").get<int>();
  ds.difficulty.default_bucket = diff.at("default_bucket").get<int>();
  ds.difficulty.buckets = diff.at("buckets").get<std::vector<std::int32_t>>();
  ds.student_ids = manifest.at("students").get<std::vector<std::string>>();

  const auto n = manifest.at("num_windows").get<std::size_t>();
  const auto L = static_cast<std::size_t>(ds.length);
  const auto q = read_array<std::int32_t>(dir / "question_ids.i32", n * L);
  const auto prev = read_array<std::int32_t>(dir / "prev_responses.i32", n * L);
  const auto buckets = read_array<std::int32_t>(dir / "difficulty_buckets.i32", n * L);
  const auto valid = read_array<std::uint8_t>(dir / "valid_mask.u8", n * L);
  const auto labels = read_array<std::uint8_t>(dir / "labels.u8", n * L);
  const auto student = read_array<std::int32_t>(dir / "student_index.i32", n);

  ds.windows.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Window& w = ds.windows[i];
    w.student = student[i];
    if (w.student < 0 || static_cast<std::size_t>(w.student) >= ds.student_ids.size()) {
      throw Error("student index out of range in window " + std::to_string(i));
    }
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t o = i * L + t;
      if (!valid[o]) continue;
      w.questions.push_back(q[o]);
      w.prev_responses.push_back(prev[o]);
      w.buckets.push_back(buckets[o]);
      w.labels.push_back(labels[o]);
    }
  }
  return ds;
}

std::vector<RawSequence> to_raw_sequences(const WindowedDataset& ds) {
  std::vector<RawSequence> out(ds.student_ids.size());
  for (std::size_t s = 0; s < out.size(); ++s) out[s].student_id = ds.student_ids[s];
  for (const auto& w : ds.windows) {
    auto& seq = out[static_cast<std::size_t>(w.student)];
    for (std::size_t t = 0; t < w.size(); ++t) {
      InteractionRecord r;
      r.student_id = seq.student_id;
      const auto qi = w.questions[t];
      r.question_id = qi >= 0 && qi < ds.vocab.size() ? ds.vocab.id_at(qi) : std::string("<oov>");
      r.correct = w.labels[t];
      seq.records.push_back(std::move(r));
    }
  }
  std::erase_if(out, [](const RawSequence& s) { return s.records.empty(); });
  return out;
}

}  // namespace lbkt
