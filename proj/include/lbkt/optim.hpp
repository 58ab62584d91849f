#pragma once

#include <cstdint>
#include <span>

#include "lbkt/model.hpp"

namespace lbkt {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  ModelParams<T> m;
  ModelParams<T> v;
  std::int64_t step = 0;

  static AdamState zeros(const ModelConfig& cfg) {
    return AdamState{ModelParams<T>::zeros(cfg), ModelParams<T>::zeros(cfg), 0};
  }
};

/// Bias-corrected Adam on one flat tensor; `step` is 1-based.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t step,
                 double lr, const AdamOptions& options = {});

/// One Adam step over every tensor. A non-finite gradient throws
/// NumericError naming the tensor before anything is modified.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state, double lr,
               const AdamOptions& options = {});

/// Rescales gradients so their global L2 norm is at most max_norm; returns
/// the norm before clipping.
template <typename T>
double clip_grad_norm(ModelParams<T>& grads, double max_norm);

struct OneCycleOptions {
  double max_lr = 0.002;
  double warmup_fraction = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
};

/// Cosine one-cycle: max_lr / div_factor rising to max_lr at
/// warmup_fraction * total_steps, then falling to max_lr / final_div_factor.
double one_cycle_lr(std::int64_t step, std::int64_t total_steps, const OneCycleOptions& options = {});

}  // namespace lbkt
