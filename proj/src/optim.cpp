#include "lbkt/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lbkt/error.hpp"

namespace lbkt {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t step,
                 double lr, const AdamOptions& o) {
  if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size()) {
    throw std::invalid_argument("adam_update: tensor sizes differ");
  }
  if (step < 1) throw std::invalid_argument("adam_update: step is 1-based");
  const double correction1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(o.beta1);
  const T b2 = static_cast<T>(o.beta2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const double m_hat = static_cast<double>(m[i]) / correction1;
    const double v_hat = static_cast<double>(v[i]) / correction2;
    param[i] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + o.epsilon));
  }
}

template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, double lr,
               const AdamOptions& options) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw std::invalid_argument("adam_step: parameter structures differ");
  }
  for (const auto& [name, tensor] : g) {
    if (!tensor->allFinite()) throw NumericError("non-finite gradient in parameter '" + name + "'");
  }
  ++state.step;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto n = static_cast<std::size_t>(p[i].second->size());
    adam_update<T>(std::span<T>(p[i].second->data(), n), std::span<const T>(g[i].second->data(), n),
                   std::span<T>(m[i].second->data(), n), std::span<T>(v[i].second->data(), n), state.step, lr,
                   options);
  }
}

template <typename T>
double clip_grad_norm(ModelParams<T>& grads, double max_norm) {
  double sq = 0.0;
  grads.visit([&](const std::string&, const Matrix<T>& m) { sq += m.template cast<double>().squaredNorm(); });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    grads.visit([&](const std::string&, Matrix<T>& m) { m *= scale; });
  }
  return norm;
}

namespace {

double cosine_anneal(double start, double end, double pct) {
  return end + (start - end) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
}

}  // namespace

double one_cycle_lr(std::int64_t step, std::int64_t total_steps, const OneCycleOptions& o) {
  if (total_steps < 1) throw std::invalid_argument("one_cycle_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) throw std::invalid_argument("one_cycle_lr: step outside [0, total_steps]");
  const double initial = o.max_lr / o.div_factor;
  const double final_lr = o.max_lr / o.final_div_factor;
  const double warm = o.warmup_fraction * static_cast<double>(total_steps);
  const auto s = static_cast<double>(step);
  if (s <= warm && warm > 0.0) return cosine_anneal(initial, o.max_lr, s / warm);
  const double span = static_cast<double>(total_steps) - warm;
  if (span <= 0.0) return o.max_lr;
  return cosine_anneal(o.max_lr, final_lr, (s - warm) / span);
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::int64_t, double, const AdamOptions&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>, std::span<double>,
                                  std::int64_t, double, const AdamOptions&);
template void adam_step<float>(ModelParams<float>&, const ModelParams<float>&, AdamState<float>&, double,
                               const AdamOptions&);
template void adam_step<double>(ModelParams<double>&, const ModelParams<double>&, AdamState<double>&, double,
                                const AdamOptions&);
template double clip_grad_norm<float>(ModelParams<float>&, double);
template double clip_grad_norm<double>(ModelParams<double>&, double);

}  // namespace lbkt
