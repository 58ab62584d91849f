#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbkt/dataset.hpp"
#include "lbkt/model.hpp"

namespace lbkt {

struct BenchOptions {
  int batch_size = 64;
  int warmup_batches = 2;
  /// Forward passes per timed run.
  int timed_batches = 4;
  int repeats = 3;
  int threads = 1;
  /// Runs whose coefficient of variation reaches this are flagged.
  double max_cv = 0.10;
};

/// Bytes a forward + backward pass keeps alive at the benchmark batch size.
struct MemoryAccounting {
  std::size_t parameter_bytes = 0;
  std::size_t activation_bytes = 0;
  std::size_t total() const { return parameter_bytes + activation_bytes; }
};

/// A prediction is one next-response probability for one sequence: the
/// last valid position in last_query mode, the same position read out of
/// the full [B, L] output in full mode.
struct CohortBench {
  int target = 0;
  AttentionMode mode = AttentionMode::full;
  std::size_t sequences = 0;
  std::vector<double> run_throughput;  // predictions per second, per repeat
  double median_throughput = 0.0;
  double cv = 0.0;
  bool unstable = false;
  double ratio = 1.0;  // median / reference median
  MemoryAccounting memory;
};

struct BenchReport {
  std::string name;
  AttentionMode mode = AttentionMode::full;
  std::vector<CohortBench> cohorts;
};

/// Times inference over each cohort padded to its target length. Batches
/// are filled by cycling the cohort's members; warmup passes are untimed.
BenchReport throughput_bench(const Model<float>& model, std::span<const Cohort> cohorts, AttentionMode mode,
                             const BenchOptions& options = {}, std::string name = "");

/// Sets each cohort's ratio against the reference entry with the same target.
void attach_ratios(BenchReport& report, const BenchReport& reference);

MemoryAccounting memory_accounting(const ModelConfig& cfg, int length, AttentionMode mode, int batch_size);

nlohmann::json to_json(const CohortBench& c);

}  // namespace lbkt
