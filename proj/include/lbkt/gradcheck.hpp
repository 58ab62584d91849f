#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lbkt/model.hpp"

namespace lbkt {

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  /// ||analytic - numeric||_2 / ||numeric||_2, or the absolute difference
  /// norm when the numeric gradient is essentially zero.
  double relative_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;
  double max_relative_error = 0.0;
  std::string worst_tensor;
  double seconds = 0.0;
};

using NamedTensor = std::pair<std::string, Matrix<double>*>;

/// Central differences (f(x + eps) - f(x - eps)) / 2 eps of `loss` for every
/// entry of every tensor, compared with `analytic` (same order and shapes).
GradcheckReport check_gradients(const std::vector<NamedTensor>& params, const std::vector<const Matrix<double>*>& analytic,
                                const std::function<double()>& loss, double epsilon = 1e-5);

/// d = 8, 2 heads, 1 layer, LSTM hidden 8, 6 questions, 4 buckets, no dropout.
ModelConfig tiny_model_config(Variant variant = Variant::lbkt);
/// Three rows of length 4, one of them partly padded.
WindowedBatch tiny_batch(const ModelConfig& cfg, std::uint64_t seed = 3);
/// Parameters with O(1) entries so every term in the network is exercised.
ModelParams<double> gradcheck_params(const ModelConfig& cfg, std::uint64_t seed = 11);

/// Whole-model check of the mean BCE gradient in double precision.
GradcheckReport gradcheck(const ModelConfig& cfg, const WindowedBatch& batch, double epsilon = 1e-5,
                          AttentionMode mode = AttentionMode::full, std::uint64_t seed = 11);

}  // namespace lbkt
