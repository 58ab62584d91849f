#include "lbkt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "lbkt/config.hpp"
#include "lbkt/error.hpp"

namespace lbkt {

namespace {

constexpr std::array<char, 8> kMagic = {'L', 'B', 'K', 'T', 'C', 'K', 'P', 'T'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (!in) throw Error("checkpoint truncated in its preamble");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

nlohmann::json read_header(std::istream& in, const std::filesystem::path& path) {
  std::array<char, 8> magic{};
  in.read(magic.data(), 8);
  if (!in || magic != kMagic) throw Error(path.string() + " is not an LBKT checkpoint");
  const std::uint64_t n = get_u64(in);
  if (n > (std::uint64_t{1} << 32)) throw Error("checkpoint header length is implausible");
  std::string text(static_cast<std::size_t>(n), '\0');
  in.read(text.data(), static_cast<std::streamsize>(n));
  if (!in) throw Error("checkpoint truncated in its header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  ck.params.visit([&](const std::string& name, const Matrix<float>& m) {
    const auto nbytes = static_cast<std::uint64_t>(m.size()) * 4;
    tensors.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  });
  const nlohmann::json header = {
      {"format", "lbkt-checkpoint"},
      {"version", 1},
      {"dtype", "float32"},
      {"model", to_json(ck.config)},
      {"vocabulary", ck.vocab.ids()},
      {"difficulty",
       {{"num_buckets", ck.difficulty.num_buckets},
        {"default_bucket", ck.difficulty.default_bucket},
        {"buckets", ck.difficulty.buckets}}},
      {"tensors", tensors},
      {"payload_bytes", offset},
      {"metadata", ck.metadata},
  };
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), 8);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<char> buf;
  ck.params.visit([&](const std::string&, const Matrix<float>& m) {
    buf.resize(static_cast<std::size_t>(m.size()) * 4);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(m.data()[i]);
      for (int k = 0; k < 4; ++k) buf[static_cast<std::size_t>(i) * 4 + static_cast<std::size_t>(k)] = static_cast<char>((bits >> (8 * k)) & 0xFF);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  });
  if (!out) throw Error("failed while writing checkpoint " + path.string());
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read_header(in, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const nlohmann::json header = read_header(in, path);
  if (header.value("format", "") != "lbkt-checkpoint") throw Error("unrecognized checkpoint format");
  Checkpoint ck;
  ck.config = model_config_from_json(header.at("model"), "model");
  ck.vocab = Vocabulary(header.at("vocabulary").get<std::vector<std::string>>());
  const auto& d = header.at("difficulty");
  ck.difficulty.num_buckets = d.at("num_buckets").get<int>();
  ck.difficulty.default_bucket = d.at("default_bucket").get<int>();
  ck.difficulty.buckets = d.at("buckets").get<std::vector<std::int32_t>>();
  ck.metadata = header.value("metadata", nlohmann::json::object());

  const std::uint64_t payload_bytes = header.at("payload_bytes").get<std::uint64_t>();
  std::vector<unsigned char> payload(static_cast<std::size_t>(payload_bytes));
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!in) throw Error("checkpoint payload is truncated");

  ck.params = ModelParams<float>::zeros(ck.config);
  const auto& entries = header.at("tensors");
  std::size_t next = 0;
  ck.params.visit([&](const std::string& name, Matrix<float>& m) {
    if (next >= entries.size()) throw Error("checkpoint lacks tensor '" + name + "'");
    const auto& e = entries[next++];
    if (e.at("name").get<std::string>() != name) {
      throw Error("checkpoint tensor '" + e.at("name").get<std::string>() + "' found where '" + name + "' expected");
    }
    const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
      throw Error("checkpoint tensor '" + name + "' has the wrong shape");
    }
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto nbytes = e.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(m.size()) * 4 || offset + nbytes > payload_bytes) {
      throw Error("checkpoint tensor '" + name + "' has an invalid extent");
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const unsigned char* p = payload.data() + offset + static_cast<std::uint64_t>(i) * 4;
      const std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
                                 (std::uint32_t{p[3]} << 24);
      m.data()[i] = std::bit_cast<float>(bits);
    }
  });
  if (next != entries.size()) throw Error("checkpoint holds tensors the config does not define");
  return ck;
}

}  // namespace lbkt
