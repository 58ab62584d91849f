#include "lbkt/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "lbkt/random.hpp"

namespace lbkt {

GradcheckReport check_gradients(const std::vector<NamedTensor>& params, const std::vector<const Matrix<double>*>& analytic,
                                const std::function<double()>& loss, double epsilon) {
  if (params.size() != analytic.size()) throw std::invalid_argument("gradient list differs from parameter list");
  const auto started = std::chrono::steady_clock::now();
  GradcheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Matrix<double>& p = *params[t].second;
    const Matrix<double>& a = *analytic[t];
    if (a.rows() != p.rows() || a.cols() != p.cols()) {
      throw std::invalid_argument("gradient shape differs for '" + params[t].first + "'");
    }
    Matrix<double> numeric(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + epsilon;
      const double up = loss();
      p.data()[i] = saved - epsilon;
      const double down = loss();
      p.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * epsilon);
    }
    TensorCheck c;
    c.name = params[t].first;
    c.entries = static_cast<std::size_t>(p.size());
    const double diff = (a - numeric).norm();
    const double scale = numeric.norm();
    c.relative_error = scale > 1e-10 ? diff / scale : diff;
    c.max_abs_error = p.size() ? (a - numeric).cwiseAbs().maxCoeff() : 0.0;
    if (c.relative_error >= report.max_relative_error) {
      report.max_relative_error = c.relative_error;
      report.worst_tensor = c.name;
    }
    report.tensors.push_back(std::move(c));
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

ModelConfig tiny_model_config(Variant variant) {
  ModelConfig cfg;
  cfg.encoder.num_layers = 1;
  cfg.encoder.num_heads = 2;
  cfg.encoder.d_model = 8;
  cfg.encoder.d_ff = 16;
  cfg.encoder.dropout = 0.0;
  cfg.encoder.layer_norm_epsilon = 1e-12;
  cfg.num_questions = 6;
  cfg.num_buckets = 4;
  cfg.lstm_hidden = 8;
  cfg.max_positions = 16;
  cfg.variant = variant;
  return cfg;
}

WindowedBatch tiny_batch(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const int length = 4;
  const int extents[] = {4, 4, 2};
  std::vector<Window> windows;
  for (int r = 0; r < 3; ++r) {
    Window w;
    w.student = r;
    for (int t = 0; t < extents[r]; ++t) {
      w.questions.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(cfg.num_questions))));
      w.buckets.push_back(static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(cfg.num_buckets))));
      w.labels.push_back(static_cast<std::uint8_t>(rng.below(2)));
      w.prev_responses.push_back(t == 0 ? kStartResponse : w.labels[static_cast<std::size_t>(t - 1)]);
    }
    windows.push_back(std::move(w));
  }
  return collate(windows, length, cfg.pad_question());
}

ModelParams<double> gradcheck_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<double> p = ModelParams<double>::zeros(cfg);
  Rng rng(seed);
  p.visit([&](const std::string& name, Matrix<double>& m) {
    const bool gain = name.size() >= 4 && name.compare(name.size() - 4, 4, "gain") == 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = (gain ? 1.0 : 0.0) + 0.4 * rng.normal();
  });
  p.embedding.question.row(cfg.pad_question()).setZero();
  return p;
}

GradcheckReport gradcheck(const ModelConfig& cfg, const WindowedBatch& batch, double epsilon, AttentionMode mode,
                          std::uint64_t seed) {
  ModelConfig c = cfg;
  c.encoder.dropout = 0.0;
  Model<double> model(c, gradcheck_params(c, seed));
  ModelParams<double> grads = ModelParams<double>::zeros(c);
  model_loss_and_grad(batch, model, mode, DropoutSpec{}, grads, 1);

  const auto loss = [&] {
    const LossAndCount lc = model_loss(batch, model, mode, 1);
    return lc.loss_sum / static_cast<double>(lc.count);
  };
  std::vector<NamedTensor> params;
  std::vector<const Matrix<double>*> analytic;
  for (auto& [name, m] : model.params().tensors()) params.emplace_back(name, m);
  for (const auto& [name, m] : std::as_const(grads).tensors()) analytic.push_back(m);
  return check_gradients(params, analytic, loss, epsilon);
}

}  // namespace lbkt
