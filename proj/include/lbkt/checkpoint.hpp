#pragma once

#include <filesystem>

#include <json.hpp>

#include "lbkt/dataset.hpp"
#include "lbkt/model.hpp"

namespace lbkt {

/// File layout: the 8 bytes "LBKTCKPT", a little-endian u64 header length,
/// a JSON header (model config, vocabulary, difficulty table, and for each
/// tensor its name, shape, byte offset and byte count), then the tensors as
/// little-endian float32 in row-major order. Offsets count from the first
/// payload byte.
struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
  Vocabulary vocab;
  DifficultyTable difficulty;
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Header only, without reading the payload.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace lbkt
