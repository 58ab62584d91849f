#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "lbkt/dataset.hpp"
#include "lbkt/model.hpp"
#include "lbkt/optim.hpp"

namespace lbkt {

enum class Scheduler { one_cycle, constant };

std::string_view to_string(Scheduler s);
Scheduler parse_scheduler(std::string_view name);

struct TrainConfig {
  int batch_size = 64;
  double test_fraction = 0.2;
  /// Share of the training side held out for early stopping.
  double validation_fraction = 0.1;
  /// Used by the constant scheduler.
  double learning_rate = 0.001;
  double max_lr = 0.002;
  int epochs = 100;
  int patience = 10;
  /// When positive, also stop if none of the first N epochs improves on epoch 1.
  int early_window = 0;
  Scheduler scheduler = Scheduler::one_cycle;
  double warmup_fraction = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double grad_clip_norm = 0.0;  // 0 disables clipping
  AdamOptions adam;
  int max_len = 200;
  WindowPolicy window_policy = WindowPolicy::truncate_last;
  std::uint64_t seed = 42;
  int threads = 1;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
  OneCycleOptions one_cycle() const { return {max_lr, warmup_fraction, div_factor, final_div_factor}; }
};

class EarlyStopping {
 public:
  explicit EarlyStopping(int patience = 10, int early_window = 0);

  /// Records the next epoch's validation loss; true when it is a new best.
  bool update(double val_loss);

  bool stopped() const { return stopped_; }
  double best_loss() const { return best_; }
  /// 1-based epoch of the best loss, 0 before any update.
  int best_epoch() const { return best_epoch_; }
  int stale_epochs() const { return stale_; }
  int epochs_seen() const { return seen_; }

 private:
  int patience_;
  int early_window_;
  double best_;
  int best_epoch_ = 0;
  int stale_ = 0;
  int seen_ = 0;
  bool stopped_ = false;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;  // rate used by the epoch's last step
  std::int64_t steps = 0;
  double seconds = 0.0;
};

struct TrainState {
  AdamState<float> adam;
  EarlyStopping early_stop;
  std::uint64_t seed = 0;
  int epochs_completed = 0;
};

struct FitResult {
  ModelConfig model_config;  // as trained, including init_seed
  ModelParams<float> best_params;
  std::vector<EpochMetrics> history;
  TrainState state;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Adam over shuffled mini-batches with per-epoch validation and early
/// stopping; the returned parameters are those of the best validation epoch.
/// Initialization, shuffling and dropout all derive from config.seed.
/// A non-finite batch loss throws NumericError with epoch, batch and lr.
FitResult fit(std::span<const Window> train, std::span<const Window> val, const ModelConfig& model_config,
              const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Windows for one student-level split, with vocabulary and difficulty
/// fitted to the training side only.
struct SplitData {
  Vocabulary vocab;
  DifficultyTable difficulty;
  std::vector<Window> train;
  std::vector<Window> val;
  std::vector<Window> test;
};

SplitData prepare_split(std::span<const RawSequence> corpus, std::span<const std::size_t> train_students,
                        std::span<const std::size_t> val_students, std::span<const std::size_t> test_students,
                        int max_len, WindowPolicy policy, int num_buckets);

/// Splits `train_side` into (fit, validation) by a seeded student shuffle.
/// Inputs and outputs are indices into the corpus.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> carve_validation(
    std::span<const std::size_t> train_side, double validation_fraction, std::uint64_t seed);

}  // namespace lbkt
