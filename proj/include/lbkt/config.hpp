#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lbkt/model.hpp"
#include "lbkt/trainer.hpp"
#include <json.hpp>

namespace lbkt {

using Json = nlohmann::json;

/// Everything a train/evaluate/ablate run needs. Defaults are the full-size
/// hyperparameters; desk runs override width and depth.
struct RunConfig {
  std::string data;  // dataset directory written by `ingest`
  ModelConfig model;
  TrainConfig train;
  std::string run_root;  // empty: $LBKT_RUN_ROOT, else ./runs
  std::uint64_t seed = 42;
  int folds = 5;
  AttentionMode eval_mode = AttentionMode::full;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

Json to_json(const ModelConfig& cfg);
Json to_json(const TrainConfig& cfg);
Json to_json(const RunConfig& cfg);

/// Strict readers: missing keys keep their defaults, unknown keys and type
/// mismatches throw ConfigError with the dotted key path.
ModelConfig model_config_from_json(const Json& j, const std::string& path = "model");
TrainConfig train_config_from_json(const Json& j, const std::string& path = "train");
RunConfig run_config_from_json(const Json& j);

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace lbkt
