#include "lbkt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "lbkt/error.hpp"
#include "lbkt/metrics.hpp"
#include "lbkt/random.hpp"

namespace lbkt {

std::string_view to_string(Scheduler s) { return s == Scheduler::one_cycle ? "one_cycle" : "constant"; }

Scheduler parse_scheduler(std::string_view name) {
  if (name == "one_cycle") return Scheduler::one_cycle;
  if (name == "constant") return Scheduler::constant;
  throw ConfigError("train.scheduler", "unknown scheduler '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size", "batch_size must be positive");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("train.test_fraction", "must be in (0, 1)");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train.validation_fraction", "must be in (0, 1)");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate", "learning_rate must be positive");
  if (!(max_lr >= learning_rate)) throw ConfigError("train.max_lr", "max_lr must be >= learning_rate");
  if (epochs < 1) throw ConfigError("train.epochs", "epochs must be positive");
  if (patience < 1 || patience > epochs) throw ConfigError("train.patience", "patience must be in [1, epochs]");
  if (early_window < 0) throw ConfigError("train.early_window", "early_window must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ConfigError("train.warmup_fraction", "must be in [0, 1]");
  }
  if (!(div_factor > 0.0)) throw ConfigError("train.div_factor", "div_factor must be positive");
  if (!(final_div_factor > 0.0)) throw ConfigError("train.final_div_factor", "final_div_factor must be positive");
  if (grad_clip_norm < 0.0) throw ConfigError("train.grad_clip_norm", "grad_clip_norm must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("train.adam_beta1", "must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("train.adam_beta2", "must be in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("train.adam_epsilon", "must be positive");
  if (max_len < 1) throw ConfigError("train.max_len", "max_len must be positive");
  if (threads < 1) throw ConfigError("train.threads", "threads must be positive");
}

EarlyStopping::EarlyStopping(int patience, int early_window)
    : patience_(patience), early_window_(early_window), best_(std::numeric_limits<double>::infinity()) {}

bool EarlyStopping::update(double val_loss) {
  ++seen_;
  const bool improved = val_loss < best_;
  if (improved) {
    best_ = val_loss;
    best_epoch_ = seen_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  if (stale_ >= patience_) stopped_ = true;
  if (early_window_ > 0 && seen_ == early_window_ && best_epoch_ <= 1) stopped_ = true;
  return improved;
}

namespace {

std::vector<std::vector<std::size_t>> batch_order(std::size_t n, int batch_size, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

WindowedBatch gather(std::span<const Window> windows, std::span<const std::size_t> rows, std::int32_t pad) {
  std::size_t longest = 1;
  for (std::size_t r : rows) longest = std::max(longest, windows[r].size());
  return collate(windows, rows, static_cast<int>(longest), pad);
}

}  // namespace

FitResult fit(std::span<const Window> train, std::span<const Window> val, const ModelConfig& model_config,
              const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  model_config.validate();
  if (train.empty()) throw Error("training split is empty");
  if (val.empty()) throw Error("validation split is empty");

  ModelConfig mc = model_config;
  mc.init_seed = mix_seed(cfg.seed, 0x1417);
  Model<float> model(mc);
  const std::int32_t pad = mc.pad_question();

  FitResult result;
  result.model_config = mc;
  result.state.adam = AdamState<float>::zeros(mc);
  result.state.early_stop = EarlyStopping(cfg.patience, cfg.early_window);
  result.state.seed = cfg.seed;
  result.best_params = model.params();

  const auto batches_per_epoch =
      static_cast<std::int64_t>((train.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                static_cast<std::size_t>(cfg.batch_size));
  const std::int64_t total_steps = batches_per_epoch * cfg.epochs;
  const std::uint64_t dropout_seed = mix_seed(cfg.seed, 0xD12);
  const bool use_dropout = mc.encoder.dropout > 0.0;

  ModelParams<float> grads = ModelParams<float>::zeros(mc);
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const auto batches = batch_order(train.size(), cfg.batch_size, mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    double lr = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const WindowedBatch batch = gather(train, batches[bi], pad);
      lr = cfg.scheduler == Scheduler::one_cycle ? one_cycle_lr(step, total_steps, cfg.one_cycle())
                                                 : cfg.learning_rate;
      grads.set_zero();
      const DropoutSpec dropout{use_dropout, dropout_seed, static_cast<std::uint64_t>(step)};
      const LossAndCount lc = model_loss_and_grad(batch, model, AttentionMode::full, dropout, grads, cfg.threads);
      if (!std::isfinite(lc.loss_sum)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << bi << ", lr " << lr;
        throw NumericError(msg.str());
      }
      loss_sum += lc.loss_sum;
      loss_count += lc.count;
      if (cfg.grad_clip_norm > 0.0) clip_grad_norm(grads, cfg.grad_clip_norm);
      try {
        adam_step(model.params(), grads, result.state.adam, lr, cfg.adam);
      } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << e.what() << " at epoch " << epoch << ", batch " << bi << ", lr " << lr;
        throw NumericError(msg.str());
      }
      ++step;
    }

    const EvalSummary v = summarize(predict(model, val, cfg.batch_size, AttentionMode::full, cfg.threads));
    if (!std::isfinite(v.loss)) {
      throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(loss_count, 1));
    m.val_loss = v.loss;
    m.val_auc = v.auc;
    m.val_acc = v.acc;
    m.lr = lr;
    m.steps = step;
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(m);
    result.state.epochs_completed = epoch;

    if (result.state.early_stop.update(v.loss)) result.best_params = model.params();
    if (on_epoch) on_epoch(m);
    if (result.state.early_stop.stopped()) break;
  }
  return result;
}

SplitData prepare_split(std::span<const RawSequence> corpus, std::span<const std::size_t> train_students,
                        std::span<const std::size_t> val_students, std::span<const std::size_t> test_students,
                        int max_len, WindowPolicy policy, int num_buckets) {
  const auto pick = [&](std::span<const std::size_t> idx) {
    std::vector<RawSequence> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(corpus[i]);
    return out;
  };
  const auto train_raw = pick(train_students);
  SplitData out;
  out.vocab = Vocabulary::build(train_raw);
  const auto train_seq = encode_sequences(train_raw, out.vocab);
  out.difficulty = estimate_difficulty(train_seq, out.vocab.size(), num_buckets);
  const auto windows_of = [&](std::span<const std::size_t> idx, std::vector<Window>& dst) {
    const auto seqs = encode_sequences(pick(idx), out.vocab);
    dst = make_windows(seqs, out.difficulty, max_len, policy);
    // Window::student indexes the corpus rather than the subset.
    for (auto& w : dst) w.student = static_cast<std::int32_t>(idx[static_cast<std::size_t>(w.student)]);
  };
  out.train = make_windows(train_seq, out.difficulty, max_len, policy);
  for (auto& w : out.train) w.student = static_cast<std::int32_t>(train_students[static_cast<std::size_t>(w.student)]);
  windows_of(val_students, out.val);
  windows_of(test_students, out.test);
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> carve_validation(
    std::span<const std::size_t> train_side, double validation_fraction, std::uint64_t seed) {
  const Fold f = train_test_split(train_side.size(), validation_fraction, seed);
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t i : f.train) out.first.push_back(train_side[i]);
  for (std::size_t i : f.test) out.second.push_back(train_side[i]);
  return out;
}

}  // namespace lbkt
