#include "lbkt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "lbkt/error.hpp"

namespace lbkt {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double coefficient_of_variation(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2 || mean == 0.0) return 0.0;
  double sq = 0.0;
  for (double x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(v.size() - 1)) / mean;
}

}  // namespace

MemoryAccounting memory_accounting(const ModelConfig& cfg, int length, AttentionMode mode, int batch_size) {
  MemoryAccounting m;
  m.parameter_bytes = expected_parameter_count(cfg) * sizeof(float);
  m.activation_bytes = static_cast<std::size_t>(batch_size) *
                       activation_bytes_per_sequence(cfg, length, mode, cfg.encoder.dropout > 0.0, sizeof(float));
  return m;
}

BenchReport throughput_bench(const Model<float>& model, std::span<const Cohort> cohorts, AttentionMode mode,
                             const BenchOptions& o, std::string name) {
  if (o.batch_size < 1 || o.repeats < 1 || o.timed_batches < 1 || o.warmup_batches < 0) {
    throw std::invalid_argument("benchmark batch, repeat and pass counts must be positive");
  }
  BenchReport report;
  report.name = std::move(name);
  report.mode = mode;
  for (const Cohort& cohort : cohorts) {
    if (cohort.windows.empty()) throw Error("cohort " + std::to_string(cohort.target) + " is empty");
    std::vector<std::size_t> order(static_cast<std::size_t>(o.batch_size));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i % cohort.windows.size();
    const WindowedBatch batch = collate(cohort.windows, order, cohort.target, model.config().pad_question());

    double sink = 0.0;
    const auto pass = [&] {
      const Matrix<float> logits = model_forward(batch, model, mode, {}, o.threads);
      sink += static_cast<double>(logits(0, 0));
    };
    for (int w = 0; w < o.warmup_batches; ++w) pass();

    CohortBench cb;
    cb.target = cohort.target;
    cb.mode = mode;
    cb.sequences = cohort.windows.size();
    for (int r = 0; r < o.repeats; ++r) {
      const auto start = std::chrono::steady_clock::now();
      for (int b = 0; b < o.timed_batches; ++b) pass();
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      cb.run_throughput.push_back(static_cast<double>(o.batch_size) * o.timed_batches / seconds);
    }
    if (!std::isfinite(sink)) throw NumericError("non-finite logits during benchmark");
    cb.median_throughput = median(cb.run_throughput);
    cb.cv = coefficient_of_variation(cb.run_throughput);
    cb.unstable = cb.cv >= o.max_cv;
    cb.memory = memory_accounting(model.config(), cohort.target, mode, o.batch_size);
    report.cohorts.push_back(std::move(cb));
  }
  return report;
}

void attach_ratios(BenchReport& report, const BenchReport& reference) {
  for (auto& c : report.cohorts) {
    for (const auto& r : reference.cohorts) {
      if (r.target == c.target && r.median_throughput > 0.0) c.ratio = c.median_throughput / r.median_throughput;
    }
  }
}

nlohmann::json to_json(const CohortBench& c) {
  return {{"cohort", c.target},
          {"mode", std::string(to_string(c.mode))},
          {"sequences", c.sequences},
          {"throughput_runs", c.run_throughput},
          {"predictions_per_second", c.median_throughput},
          {"cv", c.cv},
          {"unstable", c.unstable},
          {"speed_ratio", c.ratio},
          {"parameter_bytes", c.memory.parameter_bytes},
          {"activation_bytes", c.memory.activation_bytes}};
}

}  // namespace lbkt
