#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbkt/dataset.hpp"
#include "lbkt/trainer.hpp"

namespace lbkt {

struct FoldMetrics {
  int fold = 0;
  double acc = 0.0;
  double auc = 0.0;
  double best_val_loss = 0.0;
  int epochs = 0;
  std::size_t test_students = 0;
  std::size_t test_predictions = 0;
};

struct MetricsReport {
  std::string variant;
  std::string dataset;
  std::vector<FoldMetrics> folds;
  double acc_mean = 0.0;
  double acc_std = 0.0;  // sample standard deviation over folds
  double auc_mean = 0.0;
  double auc_std = 0.0;
  std::size_t parameter_count = 0;
  std::size_t lstm_parameter_count = 0;
  /// Test-side student indices of each fold, for comparing fold definitions.
  std::vector<std::vector<std::size_t>> fold_students;
};

struct FoldArtifacts {
  int fold = 0;
  const SplitData& split;
  const FitResult& fit;
};

struct CvOptions {
  int k = 5;
  /// Fold assignment and validation carving; training seeds derive from it.
  std::uint64_t seed = 42;
  int num_buckets = 10;
  AttentionMode eval_mode = AttentionMode::full;
  /// Called after each fold with its split and trained parameters.
  std::function<void(const FoldArtifacts&)> on_fold;
  EpochCallback on_epoch;
};

/// k models trained on fold complements (vocabulary and difficulty refit on
/// each training side, validation carved from it) and scored on the
/// held-out fold.
MetricsReport cross_validate(std::span<const RawSequence> corpus, const std::string& dataset_name,
                             const ModelConfig& model_config, const TrainConfig& train_config,
                             const CvOptions& options = {});

/// cross_validate for LBKT, LBKT-Rasch, LBKT-LSTM and BERT with identical
/// folds and seeds.
std::vector<MetricsReport> ablation_suite(std::span<const RawSequence> corpus, const std::string& dataset_name,
                                          const ModelConfig& model_config, const TrainConfig& train_config,
                                          const CvOptions& options = {});

/// Copy of the corpus with correctness values shuffled across all records.
std::vector<RawSequence> permute_labels(std::span<const RawSequence> corpus, std::uint64_t seed);

/// One row per report: variant, dataset, folds, means and deviations.
std::string comparison_csv(std::span<const MetricsReport> reports);
nlohmann::json to_json(const MetricsReport& report);

double mean_of(std::span<const double> values);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_std(std::span<const double> values);

}  // namespace lbkt
