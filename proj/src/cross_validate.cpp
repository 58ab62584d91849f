#include "lbkt/cross_validate.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "lbkt/error.hpp"
#include "lbkt/metrics.hpp"
#include "lbkt/random.hpp"

namespace lbkt {

double mean_of(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double sq = 0.0;
  for (double x : v) sq += (x - m) * (x - m);
  return std::sqrt(sq / static_cast<double>(v.size() - 1));
}

MetricsReport cross_validate(std::span<const RawSequence> corpus, const std::string& dataset_name,
                             const ModelConfig& model_config, const TrainConfig& train_config,
                             const CvOptions& options) {
  const auto folds = kfold_split(corpus.size(), options.k, options.seed);
  MetricsReport report;
  report.variant = std::string(display_name(model_config.variant));
  report.dataset = dataset_name;
  std::vector<double> accs, aucs;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto fold_seed = mix_seed(options.seed, f);
    const auto [fit_side, val_side] = carve_validation(folds[f].train, train_config.validation_fraction, fold_seed);
    const SplitData split = prepare_split(corpus, fit_side, val_side, folds[f].test, train_config.max_len,
                                          train_config.window_policy, options.num_buckets);
    ModelConfig mc = model_config;
    mc.num_questions = split.vocab.size();
    TrainConfig tc = train_config;
    tc.seed = fold_seed;
    const FitResult fit_result = fit(split.train, split.val, mc, tc, options.on_epoch);

    const Model<float> model(fit_result.model_config, fit_result.best_params);
    const auto preds = predict(model, split.test, tc.batch_size, options.eval_mode, tc.threads);
    FoldMetrics m;
    m.fold = static_cast<int>(f);
    m.acc = accuracy(preds.probs, preds.labels);
    m.auc = auc(preds.probs, preds.labels);
    m.best_val_loss = fit_result.state.early_stop.best_loss();
    m.epochs = fit_result.state.epochs_completed;
    m.test_students = folds[f].test.size();
    m.test_predictions = preds.size();
    report.folds.push_back(m);
    report.fold_students.push_back(folds[f].test);
    accs.push_back(m.acc);
    aucs.push_back(m.auc);
    report.parameter_count = fit_result.best_params.parameter_count();
    report.lstm_parameter_count = 0;
    fit_result.best_params.visit([&](const std::string& name, const Matrix<float>& t) {
      if (name.rfind("lstm.", 0) == 0) report.lstm_parameter_count += static_cast<std::size_t>(t.size());
    });
    if (options.on_fold) options.on_fold(FoldArtifacts{static_cast<int>(f), split, fit_result});
  }
  report.acc_mean = mean_of(accs);
  report.acc_std = sample_std(accs);
  report.auc_mean = mean_of(aucs);
  report.auc_std = sample_std(aucs);
  return report;
}

std::vector<MetricsReport> ablation_suite(std::span<const RawSequence> corpus, const std::string& dataset_name,
                                          const ModelConfig& model_config, const TrainConfig& train_config,
                                          const CvOptions& options) {
  std::vector<MetricsReport> out;
  for (Variant v : kAllVariants) {
    ModelConfig mc = model_config;
    mc.variant = v;
    out.push_back(cross_validate(corpus, dataset_name, mc, train_config, options));
  }
  return out;
}

std::vector<RawSequence> permute_labels(std::span<const RawSequence> corpus, std::uint64_t seed) {
  std::vector<std::uint8_t> labels;
  for (const auto& s : corpus) {
    for (const auto& r : s.records) labels.push_back(r.correct);
  }
  Rng rng(seed);
  rng.shuffle(labels);
  std::vector<RawSequence> out(corpus.begin(), corpus.end());
  std::size_t i = 0;
  for (auto& s : out) {
    for (auto& r : s.records) r.correct = labels[i++];
  }
  return out;
}

std::string comparison_csv(std::span<const MetricsReport> reports) {
  std::ostringstream out;
  out << std::setprecision(6) << std::fixed;
  out << "variant,dataset,folds,acc_mean,acc_std,auc_mean,auc_std,parameters,lstm_parameters\n";
  for (const auto& r : reports) {
    out << r.variant << ',' << r.dataset << ',' << r.folds.size() << ',' << r.acc_mean << ',' << r.acc_std << ','
        << r.auc_mean << ',' << r.auc_std << ',' << r.parameter_count << ',' << r.lstm_parameter_count << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) {
    folds.push_back({{"fold", f.fold},
                     {"acc", f.acc},
                     {"auc", f.auc},
                     {"best_val_loss", f.best_val_loss},
                     {"epochs", f.epochs},
                     {"test_students", f.test_students},
                     {"test_predictions", f.test_predictions}});
  }
  return {{"variant", r.variant},     {"dataset", r.dataset},   {"folds", folds},
          {"acc_mean", r.acc_mean},   {"acc_std", r.acc_std},   {"auc_mean", r.auc_mean},
          {"auc_std", r.auc_std},     {"parameters", r.parameter_count},
          {"lstm_parameters", r.lstm_parameter_count}};
}

}  // namespace lbkt
