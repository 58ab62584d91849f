#include "lbkt/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lbkt/bench.hpp"
#include "lbkt/checkpoint.hpp"
#include "lbkt/config.hpp"
#include "lbkt/cross_validate.hpp"
#include "lbkt/dataset_io.hpp"
#include "lbkt/error.hpp"
#include "lbkt/export.hpp"
#include "lbkt/gradcheck.hpp"
#include "lbkt/metrics.hpp"
#include "lbkt/synthetic.hpp"

namespace lbkt::cli {

namespace fs = std::filesystem;

std::string run_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("LBKT_RUN_ROOT"); env && *env) return env;
  return "runs";
}

namespace {

/// Fresh directory <root>/<command>-YYYYmmdd-HHMMSS[-n]; never reuses one.
fs::path make_run_dir(const std::string& root, const std::string& command) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  fs::create_directories(root);
  const std::string base = command + "-" + stamp;
  for (int n = 0;; ++n) {
    const fs::path dir = fs::path(root) / (n == 0 ? base : base + "-" + std::to_string(n));
    if (fs::create_directory(dir)) return dir;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed while writing " + path.string());
}

void append_line(const fs::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to " + path.string());
  out << j.dump() << '\n';
}

void snapshot(const fs::path& dir, const Json& config) { write_text(dir / "config.json", config.dump(2) + "\n"); }

Json epoch_json(const EpochMetrics& m) {
  const auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  return {{"epoch", m.epoch}, {"train_loss", m.train_loss}, {"val_loss", m.val_loss},
          {"val_auc", num(m.val_auc)}, {"val_acc", m.val_acc}, {"lr", m.lr}, {"steps", m.steps}};
}

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument("bad");
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(key, "'" + item + "' is not a positive integer");
    }
  }
  if (out.empty()) throw ConfigError(key, "list is empty");
  return out;
}

std::vector<AttentionMode> parse_modes(const std::string& text) {
  std::vector<AttentionMode> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(parse_attention_mode(item));
    } catch (const std::exception&) {
      throw ConfigError("mode", "unknown attention mode '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("mode", "no attention mode given");
  return out;
}

/// Flags shared by train and ablate. Each overrides the config file only
/// when given on the command line; defaults shown are the built-in values.
struct Overrides {
  RunConfig defaults;
  std::string config_path;
  std::string data;
  std::string variant = "lbkt";
  std::string run_root;
  std::uint64_t seed = 42;
  int folds = 5;
  int batch_size, epochs, patience, early_window, max_len, threads;
  double learning_rate, max_lr, test_fraction, validation_fraction, grad_clip;
  int d_model, layers, heads, d_ff, lstm_hidden, buckets;
  double dropout;
  std::string mask_mode, window_policy, scheduler;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* app, bool with_folds) {
    const ModelConfig& m = defaults.model;
    const TrainConfig& t = defaults.train;
    batch_size = t.batch_size;
    epochs = t.epochs;
    patience = t.patience;
    early_window = t.early_window;
    max_len = t.max_len;
    threads = t.threads;
    learning_rate = t.learning_rate;
    max_lr = t.max_lr;
    test_fraction = t.test_fraction;
    validation_fraction = t.validation_fraction;
    grad_clip = t.grad_clip_norm;
    d_model = m.encoder.d_model;
    layers = m.encoder.num_layers;
    heads = m.encoder.num_heads;
    d_ff = m.encoder.d_ff;
    lstm_hidden = m.lstm_hidden;
    buckets = m.num_buckets;
    dropout = m.encoder.dropout;
    mask_mode = std::string(to_string(m.encoder.mask_mode));
    window_policy = std::string(to_string(t.window_policy));
    scheduler = std::string(to_string(t.scheduler));

    app->add_option("--config", config_path, "JSON run config (unknown keys are rejected)");
    opts["data"] = app->add_option("--data", data, "Dataset directory written by ingest");
    opts["variant"] = app->add_option("--variant", variant, "lbkt, lbkt-no-rasch, lbkt-no-lstm or bert")
                          ->capture_default_str();
    opts["run_root"] = app->add_option("--run-root", run_root, "Parent of the run directory (else $LBKT_RUN_ROOT, else runs)");
    opts["seed"] = app->add_option("--seed", seed, "Seed for splits, initialization, shuffling and dropout")
                       ->capture_default_str();
    if (with_folds) opts["folds"] = app->add_option("--folds", folds, "Cross-validation folds")->capture_default_str();
    opts["batch_size"] = app->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
    opts["epochs"] = app->add_option("--epochs", epochs, "Maximum epochs")->capture_default_str();
    opts["patience"] = app->add_option("--patience", patience, "Early-stopping patience in epochs")->capture_default_str();
    opts["early_window"] = app->add_option("--early-window", early_window,
                                           "Also stop if none of the first N epochs improves on the first (0 = off)")
                               ->capture_default_str();
    opts["learning_rate"] = app->add_option("--lr", learning_rate, "Base learning rate (constant scheduler)")
                                ->capture_default_str();
    opts["max_lr"] = app->add_option("--max-lr", max_lr, "One-cycle peak learning rate")->capture_default_str();
    opts["scheduler"] = app->add_option("--scheduler", scheduler, "one_cycle or constant")->capture_default_str();
    opts["test_fraction"] = app->add_option("--test-fraction", test_fraction, "Held-out test share of students")
                                ->capture_default_str();
    opts["validation_fraction"] = app->add_option("--validation-fraction", validation_fraction,
                                                  "Share of training students used for early stopping")
                                      ->capture_default_str();
    opts["grad_clip"] = app->add_option("--grad-clip", grad_clip, "Global gradient-norm clip (0 = off)")
                            ->capture_default_str();
    opts["max_len"] = app->add_option("--max-len", max_len, "Window length")->capture_default_str();
    opts["window_policy"] = app->add_option("--window-policy", window_policy, "truncate_last or slide")
                                ->capture_default_str();
    opts["threads"] = app->add_option("--threads", threads, "Worker threads")->capture_default_str();
    opts["d_model"] = app->add_option("--d-model", d_model, "Embedding and encoder width")->capture_default_str();
    opts["layers"] = app->add_option("--layers", layers, "Encoder layers")->capture_default_str();
    opts["heads"] = app->add_option("--heads", heads, "Attention heads")->capture_default_str();
    opts["d_ff"] = app->add_option("--d-ff", d_ff, "Feed-forward width")->capture_default_str();
    opts["lstm_hidden"] = app->add_option("--lstm-hidden", lstm_hidden, "LSTM hidden width")->capture_default_str();
    opts["buckets"] = app->add_option("--buckets", buckets, "Difficulty buckets")->capture_default_str();
    opts["dropout"] = app->add_option("--dropout", dropout, "Dropout rate")->capture_default_str();
    opts["mask_mode"] = app->add_option("--mask-mode", mask_mode, "causal or bidirectional")->capture_default_str();
  }

  bool given(const char* key) const {
    const auto it = opts.find(key);
    return it != opts.end() && it->second->count() > 0;
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (given("data")) c.data = data;
    if (given("variant")) c.model.variant = parse_variant(variant);
    if (given("run_root")) c.run_root = run_root;
    if (given("seed")) c.seed = seed;
    if (given("folds")) c.folds = folds;
    if (given("batch_size")) c.train.batch_size = batch_size;
    if (given("epochs")) c.train.epochs = epochs;
    if (given("patience")) c.train.patience = patience;
    if (given("early_window")) c.train.early_window = early_window;
    if (given("learning_rate")) c.train.learning_rate = learning_rate;
    if (given("max_lr")) c.train.max_lr = max_lr;
    if (given("scheduler")) c.train.scheduler = parse_scheduler(scheduler);
    if (given("test_fraction")) c.train.test_fraction = test_fraction;
    if (given("validation_fraction")) c.train.validation_fraction = validation_fraction;
    if (given("grad_clip")) c.train.grad_clip_norm = grad_clip;
    if (given("max_len")) c.train.max_len = max_len;
    if (given("window_policy")) {
      try {
        c.train.window_policy = parse_window_policy(window_policy);
      } catch (const std::exception& e) {
        throw ConfigError("train.window_policy", e.what());
      }
    }
    if (given("threads")) c.train.threads = threads;
    if (given("d_model")) c.model.encoder.d_model = d_model;
    if (given("layers")) c.model.encoder.num_layers = layers;
    if (given("heads")) c.model.encoder.num_heads = heads;
    if (given("d_ff")) c.model.encoder.d_ff = d_ff;
    if (given("lstm_hidden")) c.model.lstm_hidden = lstm_hidden;
    if (given("buckets")) c.model.num_buckets = buckets;
    if (given("dropout")) c.model.encoder.dropout = dropout;
    if (given("mask_mode")) c.model.encoder.mask_mode = parse_mask_mode(mask_mode);
    c.train.seed = c.seed;
    if (c.data.empty()) throw ConfigError("data", "no dataset directory given (--data or \"data\" in the config)");
    c.validate();
    return c;
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

int cmd_ingest(const Context& ctx, const std::string& csv, const std::string& schema_text, const std::string& synthetic,
               const SyntheticIrtOptions& irt, const std::string& out_dir, const std::string& name, int max_len,
               const std::string& policy_name, int buckets) {
  if (out_dir.empty()) throw ConfigError("out", "--out is required");
  if (csv.empty() == synthetic.empty()) throw ConfigError("input", "give exactly one of <csv> or --synthetic");
  if (!synthetic.empty() && synthetic != "irt") throw ConfigError("synthetic", "only 'irt' is available");
  if (max_len < 1) throw ConfigError("max_len", "must be positive");
  if (buckets < 1) throw ConfigError("buckets", "must be positive");
  WindowPolicy policy;
  try {
    policy = parse_window_policy(policy_name);
  } catch (const std::exception& e) {
    throw ConfigError("window_policy", e.what());
  }
  const CsvSchema schema = schema_text.empty() ? CsvSchema{} : CsvSchema::parse(schema_text);
  if (fs::exists(fs::path(out_dir) / "manifest.json")) {
    throw Error("refusing to overwrite the dataset in " + out_dir);
  }
  fs::create_directories(out_dir);
  Json cfg = {{"command", "ingest"}, {"max_len", max_len}, {"window_policy", policy_name}, {"buckets", buckets}};
  if (!synthetic.empty()) {
    cfg["synthetic"] = {{"kind", synthetic},
                        {"students", irt.students},
                        {"questions", irt.questions},
                        {"min_length", irt.min_length},
                        {"max_length", irt.max_length},
                        {"ability_sd", irt.ability_sd},
                        {"difficulty_sd", irt.difficulty_sd},
                        {"learning_gain", irt.learning_gain},
                        {"seed", irt.seed}};
  } else {
    cfg["csv"] = csv;
    cfg["schema"] = {{"student", schema.student},
                     {"question", schema.question},
                     {"correct", schema.correct},
                     {"timestamp", schema.timestamp.value_or("")},
                     {"concept", schema.concept_id.value_or("")}};
  }
  snapshot(out_dir, cfg);

  std::vector<RawSequence> corpus;
  Json summary = {{"command", "ingest"}, {"out", out_dir}};
  if (!synthetic.empty()) {
    corpus = generate_irt(irt).sequences;
  } else {
    ParseResult parsed = parse_interaction_log(fs::path(csv), schema);
    summary["rows_read"] = parsed.rows_read;
    summary["skipped_rows"] = parsed.skipped_rows;
    summary["warnings"] = parsed.warnings;
    corpus = std::move(parsed.sequences);
  }
  const WindowedDataset ds =
      build_windowed_dataset(corpus, max_len, policy, buckets, name.empty() ? fs::path(out_dir).filename().string() : name);
  save_windowed_dataset(ds, out_dir);
  summary["students"] = ds.student_ids.size();
  summary["questions"] = ds.vocab.size();
  summary["windows"] = ds.windows.size();
  ctx.out << summary.dump() << '\n';
  return 0;
}

int cmd_train(const Context& ctx, const Overrides& ov) {
  const RunConfig cfg = ov.resolve();
  const fs::path dir = make_run_dir(run_root(cfg.run_root), "train");
  snapshot(dir, to_json(cfg));

  const WindowedDataset ds = load_windowed_dataset(cfg.data);
  const auto corpus = to_raw_sequences(ds);
  const Fold split = train_test_split(corpus.size(), cfg.train.test_fraction, cfg.seed);
  const auto [fit_side, val_side] = carve_validation(split.train, cfg.train.validation_fraction, mix_seed(cfg.seed, 1));
  const SplitData data = prepare_split(corpus, fit_side, val_side, split.test, cfg.train.max_len,
                                       cfg.train.window_policy, cfg.model.num_buckets);
  ModelConfig mc = cfg.model;
  mc.num_questions = data.vocab.size();

  const fs::path metrics_path = dir / "metrics.jsonl";
  const fs::path timing_path = dir / "timing.jsonl";
  const FitResult result = fit(data.train, data.val, mc, cfg.train, [&](const EpochMetrics& m) {
    append_line(metrics_path, epoch_json(m));
    append_line(timing_path, {{"epoch", m.epoch}, {"wall_seconds", m.seconds}});
  });

  const Model<float> model(result.model_config, result.best_params);
  const EvalSummary test = summarize(predict(model, data.test, cfg.train.batch_size, cfg.eval_mode, cfg.train.threads));
  Checkpoint ck{result.model_config, result.best_params, data.vocab, data.difficulty,
                {{"dataset", ds.name},
                 {"best_epoch", result.state.early_stop.best_epoch()},
                 {"best_val_loss", result.state.early_stop.best_loss()},
                 {"epochs_completed", result.state.epochs_completed},
                 {"split", {{"seed", cfg.seed}, {"test_fraction", cfg.train.test_fraction}}},
                 {"max_len", cfg.train.max_len},
                 {"window_policy", std::string(to_string(cfg.train.window_policy))}}};
  save_checkpoint(dir / "checkpoint.lbkt", ck);
  const Json summary = {{"command", "train"},
                        {"run_dir", dir.string()},
                        {"variant", std::string(display_name(mc.variant))},
                        {"epochs", result.state.epochs_completed},
                        {"best_epoch", result.state.early_stop.best_epoch()},
                        {"best_val_loss", result.state.early_stop.best_loss()},
                        {"test_acc", test.acc},
                        {"test_auc", std::isfinite(test.auc) ? Json(test.auc) : Json(nullptr)},
                        {"test_predictions", test.count}};
  write_text(dir / "test_metrics.json", summary.dump(2) + "\n");
  ctx.out << summary.dump() << '\n';
  return 0;
}

/// Re-windows a dataset through a checkpoint's vocabulary and difficulty.
std::vector<Window> windows_for(const Checkpoint& ck, const WindowedDataset& ds, const std::string& split_name,
                                int max_len, WindowPolicy policy) {
  auto corpus = to_raw_sequences(ds);
  if (split_name == "test") {
    const auto& s = ck.metadata.at("split");
    const Fold f = train_test_split(corpus.size(), s.at("test_fraction").get<double>(), s.at("seed").get<std::uint64_t>());
    std::vector<RawSequence> picked;
    for (std::size_t i : f.test) picked.push_back(corpus[i]);
    corpus = std::move(picked);
  } else if (split_name != "all") {
    throw ConfigError("split", "split must be 'all' or 'test'");
  }
  const auto seqs = encode_sequences(corpus, ck.vocab);
  return make_windows(seqs, ck.difficulty, max_len, policy);
}

int checkpoint_max_len(const Checkpoint& ck) { return ck.metadata.value("max_len", 200); }

WindowPolicy checkpoint_policy(const Checkpoint& ck) {
  return parse_window_policy(ck.metadata.value("window_policy", std::string("truncate_last")));
}

int cmd_evaluate(const Context& ctx, const std::string& checkpoint, const std::string& data, const std::string& mode_name,
                 const std::string& split_name, const std::string& root, int batch_size, int threads) {
  if (checkpoint.empty()) throw ConfigError("checkpoint", "--checkpoint is required");
  if (data.empty()) throw ConfigError("data", "--data is required");
  if (batch_size < 1) throw ConfigError("batch_size", "must be positive");
  if (split_name != "all" && split_name != "test") throw ConfigError("split", "split must be 'all' or 'test'");
  const AttentionMode mode = parse_modes(mode_name).front();
  const fs::path dir = make_run_dir(run_root(root), "evaluate");
  snapshot(dir, {{"command", "evaluate"}, {"checkpoint", checkpoint}, {"data", data}, {"mode", mode_name},
                 {"split", split_name}, {"batch_size", batch_size}, {"threads", threads}});
  const Checkpoint ck = load_checkpoint(checkpoint);
  const WindowedDataset ds = load_windowed_dataset(data);
  const auto windows = windows_for(ck, ds, split_name, checkpoint_max_len(ck), checkpoint_policy(ck));
  const Model<float> model(ck.config, ck.params);
  const EvalSummary s = summarize(predict(model, windows, batch_size, mode, threads));
  const Json summary = {{"command", "evaluate"},
                        {"run_dir", dir.string()},
                        {"variant", std::string(display_name(ck.config.variant))},
                        {"mode", std::string(to_string(mode))},
                        {"split", split_name},
                        {"loss", s.loss},
                        {"acc", s.acc},
                        {"auc", std::isfinite(s.auc) ? Json(s.auc) : Json(nullptr)},
                        {"predictions", s.count}};
  append_line(dir / "metrics.jsonl", summary);
  ctx.out << summary.dump() << '\n';
  return 0;
}

int cmd_ablate(const Context& ctx, const Overrides& ov) {
  const RunConfig cfg = ov.resolve();
  const fs::path dir = make_run_dir(run_root(cfg.run_root), "ablate");
  snapshot(dir, to_json(cfg));
  const WindowedDataset ds = load_windowed_dataset(cfg.data);
  const auto corpus = to_raw_sequences(ds);
  CvOptions options;
  options.k = cfg.folds;
  options.seed = cfg.seed;
  options.num_buckets = cfg.model.num_buckets;
  options.eval_mode = cfg.eval_mode;
  std::vector<MetricsReport> reports;
  for (Variant v : kAllVariants) {
    ModelConfig mc = cfg.model;
    mc.variant = v;
    const fs::path vdir = dir / std::string(cli_name(v));
    fs::create_directories(vdir);
    options.on_fold = [&](const FoldArtifacts& a) {
      save_checkpoint(vdir / ("fold" + std::to_string(a.fold) + ".lbkt"),
                      Checkpoint{a.fit.model_config, a.fit.best_params, a.split.vocab, a.split.difficulty,
                                 {{"dataset", ds.name}, {"fold", a.fold}}});
    };
    reports.push_back(cross_validate(corpus, ds.name, mc, cfg.train, options));
    for (const auto& f : reports.back().folds) {
      append_line(dir / "metrics.jsonl", {{"variant", reports.back().variant}, {"dataset", ds.name}, {"fold", f.fold},
                                          {"acc", f.acc}, {"auc", f.auc}, {"epochs", f.epochs}});
    }
  }
  const std::string csv = comparison_csv(reports);
  write_text(dir / "comparison.csv", csv);
  Json rows = Json::array();
  for (const auto& r : reports) rows.push_back(to_json(r));
  write_text(dir / "reports.json", rows.dump(2) + "\n");
  ctx.out << Json{{"command", "ablate"}, {"run_dir", dir.string()}, {"comparison", (dir / "comparison.csv").string()}}.dump()
          << '\n';
  ctx.out << csv;
  return 0;
}

struct BenchArgs {
  std::string checkpoint;
  Overrides model;  // used when no checkpoint is given
  std::string cohorts = "100,200,300,400";
  std::string modes = "full,last_query";
  std::string reference = "full";
  std::size_t per_cohort = 50;
  std::size_t n_long = 200;
  std::size_t min_len = 100;
  BenchOptions options;
};

int cmd_bench(const Context& ctx, BenchArgs& a) {
  const auto targets = parse_int_list(a.cohorts, "cohorts");
  auto modes = parse_modes(a.modes);
  const AttentionMode reference = parse_modes(a.reference).front();
  if (a.options.repeats < 1) throw ConfigError("repeats", "must be positive");
  if (a.options.warmup_batches < 2) throw ConfigError("warmup", "at least 2 warmup batches are required");
  if (a.options.batch_size < 1) throw ConfigError("batch_size", "must be positive");

  std::optional<Checkpoint> ck;
  RunConfig cfg;
  if (!a.checkpoint.empty()) {
    if (a.model.opts.at("data")->count() == 0) throw ConfigError("data", "--data is required");
    cfg.data = a.model.data;
    cfg.run_root = a.model.run_root;
  } else {
    cfg = a.model.resolve();
  }
  a.options.threads = a.model.given("threads") ? a.model.threads : cfg.train.threads;
  const fs::path dir = make_run_dir(run_root(cfg.run_root), "bench");
  Json snap = {{"command", "bench"}, {"cohorts", targets}, {"modes", a.modes}, {"reference", a.reference},
               {"batch_size", a.options.batch_size}, {"warmup_batches", a.options.warmup_batches},
               {"timed_batches", a.options.timed_batches}, {"repeats", a.options.repeats},
               {"per_cohort", a.per_cohort}, {"n_long", a.n_long}, {"min_len", a.min_len}};
  if (!a.checkpoint.empty()) {
    snap["checkpoint"] = a.checkpoint;
    snap["data"] = cfg.data;
  } else {
    snap["run"] = to_json(cfg);
  }
  snapshot(dir, snap);

  const WindowedDataset ds = load_windowed_dataset(cfg.data);
  const auto corpus = to_raw_sequences(ds);
  Vocabulary vocab;
  DifficultyTable difficulty;
  ModelConfig mc;
  std::optional<Model<float>> model;
  if (!a.checkpoint.empty()) {
    ck = load_checkpoint(a.checkpoint);
    vocab = ck->vocab;
    difficulty = ck->difficulty;
    model.emplace(ck->config, ck->params);
  } else {
    vocab = ds.vocab;
    difficulty = ds.difficulty;
    mc = cfg.model;
    mc.num_questions = vocab.size();
    mc.init_seed = cfg.seed;
    int longest = 0;
    for (int t : targets) longest = std::max(longest, t);
    mc.max_positions = std::max(mc.max_positions, longest);
    model.emplace(mc);
  }
  for (int t : targets) {
    if (t > model->config().max_positions) {
      throw ConfigError("cohorts", "cohort " + std::to_string(t) + " exceeds the model's position table");
    }
  }
  const auto seqs = encode_sequences(corpus, vocab);
  CohortOptions co;
  co.targets = targets;
  co.per_cohort = a.per_cohort;
  co.n_long = a.n_long;
  co.min_len = a.min_len;
  const CohortSelection sel = select_cohorts(seqs, difficulty, co);
  for (const auto& w : sel.warnings) append_line(dir / "warnings.jsonl", {{"warning", w}});

  if (std::find(modes.begin(), modes.end(), reference) == modes.end()) modes.insert(modes.begin(), reference);
  std::map<AttentionMode, BenchReport> reports;
  for (AttentionMode m : modes) reports[m] = throughput_bench(*model, sel.cohorts, m, a.options, std::string(to_string(m)));
  for (auto& [m, r] : reports) attach_ratios(r, reports.at(reference));

  std::ostringstream csv;
  csv << "cohort,mode,sequences,predictions_per_second,cv,unstable,speed_ratio,parameter_bytes,activation_bytes\n";
  for (AttentionMode m : modes) {
    for (const auto& c : reports.at(m).cohorts) {
      append_line(dir / "metrics.jsonl", to_json(c));
      csv << c.target << ',' << to_string(c.mode) << ',' << c.sequences << ',' << c.median_throughput << ',' << c.cv
          << ',' << (c.unstable ? "true" : "false") << ',' << c.ratio << ',' << c.memory.parameter_bytes << ','
          << c.memory.activation_bytes << '\n';
    }
  }
  write_text(dir / "bench.csv", csv.str());
  ctx.out << Json{{"command", "bench"}, {"run_dir", dir.string()}, {"reference", std::string(to_string(reference))}}.dump()
          << '\n';
  ctx.out << csv.str();
  return 0;
}

int cmd_export(const Context& ctx, const std::string& checkpoint, const std::string& data, const std::string& out_path,
               const std::string& split_name, const std::string& root, int threads) {
  if (checkpoint.empty()) throw ConfigError("checkpoint", "--checkpoint is required");
  if (data.empty()) throw ConfigError("data", "--data is required");
  if (out_path.empty()) throw ConfigError("out", "--out is required");
  if (split_name != "all" && split_name != "test") throw ConfigError("split", "split must be 'all' or 'test'");
  const fs::path dir = make_run_dir(run_root(root), "export");
  snapshot(dir, {{"command", "export-embeddings"}, {"checkpoint", checkpoint}, {"data", data}, {"out", out_path},
                 {"split", split_name}});
  const Checkpoint ck = load_checkpoint(checkpoint);
  const WindowedDataset ds = load_windowed_dataset(data);
  const auto windows = windows_for(ck, ds, split_name, checkpoint_max_len(ck), checkpoint_policy(ck));
  const Model<float> model(ck.config, ck.params);
  const ExportSummary s = export_embeddings(model, ck.vocab, windows, out_path, 64, threads);
  const Json summary = {{"command", "export-embeddings"}, {"run_dir", dir.string()}, {"out", out_path},
                        {"rows", s.rows}, {"columns", s.columns}};
  append_line(dir / "metrics.jsonl", summary);
  ctx.out << summary.dump() << '\n';
  return 0;
}

int cmd_gradcheck(const Context& ctx, bool tiny, const std::string& variant, double epsilon, double tolerance,
                  const std::string& root) {
  if (!tiny) throw ConfigError("tiny", "only --tiny is supported");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be positive");
  const Variant v = parse_variant(variant);
  const fs::path dir = make_run_dir(run_root(root), "gradcheck");
  const ModelConfig mc = tiny_model_config(v);
  snapshot(dir, {{"command", "gradcheck"}, {"model", to_json(mc)}, {"epsilon", epsilon}, {"tolerance", tolerance}});
  const WindowedBatch batch = tiny_batch(mc);
  Json tensors = Json::array();
  double worst = 0.0;
  std::string worst_name;
  double seconds = 0.0;
  for (AttentionMode mode : {AttentionMode::full, AttentionMode::last_query}) {
    const GradcheckReport r = gradcheck(mc, batch, epsilon, mode);
    seconds += r.seconds;
    for (const auto& t : r.tensors) {
      tensors.push_back({{"mode", std::string(to_string(mode))}, {"tensor", t.name}, {"entries", t.entries},
                         {"relative_error", t.relative_error}, {"max_abs_error", t.max_abs_error}});
    }
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = std::string(to_string(mode)) + ":" + r.worst_tensor;
    }
  }
  for (const auto& t : tensors) append_line(dir / "metrics.jsonl", t);
  const bool pass = worst < tolerance;
  ctx.out << Json{{"command", "gradcheck"}, {"max_relative_error", worst}, {"worst_tensor", worst_name},
                  {"tolerance", tolerance}, {"tensors", tensors.size()}, {"seconds", seconds},
                  {"pass", pass}, {"run_dir", dir.string()}}
                 .dump()
          << '\n';
  return pass ? 0 : 1;
}

void error_line(std::ostream& err, const std::string& kind, const std::string& message, const std::string& key = "") {
  Json j = {{"error", kind}, {"message", message}};
  if (!key.empty()) j["key"] = key;
  err << j.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LBKT knowledge tracing: ingestion, training, evaluation, ablation and benchmarking", "lbkt"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert an interaction log (or a synthetic IRT corpus) to windows");
  std::string csv, schema_text, synthetic, out_dir, name, policy_name = "slide";
  int ingest_max_len = 200, ingest_buckets = 10;
  SyntheticIrtOptions irt;
  ingest->add_option("csv", csv, "Interaction log CSV with a header row");
  ingest->add_option("--schema", schema_text, "Column mapping, e.g. student=user_id,question=item_id,correct=correct,timestamp=ts");
  ingest->add_option("--synthetic", synthetic, "Generate instead of reading: irt");
  ingest->add_option("--students", irt.students, "Synthetic students")->capture_default_str();
  ingest->add_option("--questions", irt.questions, "Synthetic questions")->capture_default_str();
  ingest->add_option("--min-length", irt.min_length, "Shortest synthetic sequence")->capture_default_str();
  ingest->add_option("--max-length", irt.max_length, "Longest synthetic sequence")->capture_default_str();
  ingest->add_option("--learning-gain", irt.learning_gain, "Ability gain per attempt")->capture_default_str();
  ingest->add_option("--seed", irt.seed, "Synthetic generator seed")->capture_default_str();
  ingest->add_option("--out", out_dir, "Output dataset directory");
  ingest->add_option("--name", name, "Dataset name (default: directory name)");
  ingest->add_option("--max-len", ingest_max_len, "Stored window length")->capture_default_str();
  ingest->add_option("--window-policy", policy_name, "slide keeps whole histories; truncate_last keeps the latest")
      ->capture_default_str();
  ingest->add_option("--buckets", ingest_buckets, "Difficulty buckets for the stored table")->capture_default_str();

  // train / ablate
  auto* train = app.add_subcommand("train", "Train one variant with early stopping and save its checkpoint");
  Overrides train_ov;
  train_ov.attach(train, false);
  auto* ablate = app.add_subcommand("ablate", "Cross-validate all four variants on identical folds");
  Overrides ablate_ov;
  ablate_ov.attach(ablate, true);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
  std::string eval_ckpt, eval_data, eval_mode = "full", eval_split = "all", eval_root;
  int eval_batch = 64, eval_threads = 1;
  evaluate->add_option("--checkpoint", eval_ckpt, "Checkpoint file");
  evaluate->add_option("--data", eval_data, "Dataset directory");
  evaluate->add_option("--mode", eval_mode, "full or last_query")->capture_default_str();
  evaluate->add_option("--split", eval_split, "all, or test to reuse the training run's held-out students")
      ->capture_default_str();
  evaluate->add_option("--batch-size", eval_batch, "Inference batch size")->capture_default_str();
  evaluate->add_option("--threads", eval_threads, "Worker threads")->capture_default_str();
  evaluate->add_option("--run-root", eval_root, "Parent of the run directory");

  // bench
  auto* bench = app.add_subcommand("bench", "Throughput per length cohort in full and last_query modes");
  BenchArgs bench_args;
  bench->add_option("--checkpoint", bench_args.checkpoint, "Checkpoint to time (else a fresh model from the flags)");
  bench_args.model.attach(bench, false);
  bench->add_option("--cohorts", bench_args.cohorts, "Cohort lengths")->capture_default_str();
  bench->add_option("--mode", bench_args.modes, "Comma-separated modes to time")->capture_default_str();
  bench->add_option("--reference", bench_args.reference, "Mode the speed ratio is measured against")->capture_default_str();
  bench->add_option("--per-cohort", bench_args.per_cohort, "Sequences per cohort")->capture_default_str();
  bench->add_option("--n-long", bench_args.n_long, "Size of the long-sequence subset")->capture_default_str();
  bench->add_option("--min-len", bench_args.min_len, "Length a sequence must exceed to be long")->capture_default_str();
  bench->add_option("--bench-batch", bench_args.options.batch_size, "Sequences per timed batch")->capture_default_str();
  bench->add_option("--warmup", bench_args.options.warmup_batches, "Untimed warmup batches")->capture_default_str();
  bench->add_option("--timed-batches", bench_args.options.timed_batches, "Batches per timed run")->capture_default_str();
  bench->add_option("--repeats", bench_args.options.repeats, "Timed runs (median reported)")->capture_default_str();

  // export-embeddings
  auto* exp = app.add_subcommand("export-embeddings", "Write composed question embeddings as TSV");
  std::string exp_ckpt, exp_data, exp_out, exp_split = "all", exp_root;
  int exp_threads = 1;
  exp->add_option("--checkpoint", exp_ckpt, "Checkpoint file");
  exp->add_option("--data", exp_data, "Dataset directory used for mean predicted probabilities");
  exp->add_option("--out", exp_out, "Output TSV path");
  exp->add_option("--split", exp_split, "all or test")->capture_default_str();
  exp->add_option("--threads", exp_threads, "Worker threads")->capture_default_str();
  exp->add_option("--run-root", exp_root, "Parent of the run directory");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  bool tiny = false;
  std::string gc_variant = "lbkt", gc_root;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  gc->add_flag("--tiny", tiny, "Use the tiny 64-bit configuration");
  gc->add_option("--variant", gc_variant, "Variant to check")->capture_default_str();
  gc->add_option("--epsilon", gc_eps, "Central-difference step")->capture_default_str();
  gc->add_option("--tolerance", gc_tol, "Pass threshold on the worst relative error")->capture_default_str();
  gc->add_option("--run-root", gc_root, "Parent of the run directory");

  std::vector<const char*> argv;
  argv.push_back("lbkt");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    return 2;
  }

  const Context ctx{out, err};
  try {
    if (*ingest) {
      return cmd_ingest(ctx, csv, schema_text, synthetic, irt, out_dir, name, ingest_max_len, policy_name,
                        ingest_buckets);
    }
    if (*train) return cmd_train(ctx, train_ov);
    if (*ablate) return cmd_ablate(ctx, ablate_ov);
    if (*evaluate) {
      return cmd_evaluate(ctx, eval_ckpt, eval_data, eval_mode, eval_split, eval_root, eval_batch, eval_threads);
    }
    if (*bench) return cmd_bench(ctx, bench_args);
    if (*exp) return cmd_export(ctx, exp_ckpt, exp_data, exp_out, exp_split, exp_root, exp_threads);
    if (*gc) return cmd_gradcheck(ctx, tiny, gc_variant, gc_eps, gc_tol, gc_root);
  } catch (const ConfigError& e) {
    error_line(err, "config", e.what(), e.key());
    return 2;
  } catch (const std::exception& e) {
    error_line(err, "runtime", e.what());
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace lbkt::cli
