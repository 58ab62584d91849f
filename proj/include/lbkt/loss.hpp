#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

#include "lbkt/tensor.hpp"

namespace lbkt {

/// max(z, 0) - z y + ln(1 + e^{-|z|}), stable for any finite z.
inline double bce_term(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Mean BCE over positions with valid != 0. Throws when none are valid.
double bce_with_logits(std::span<const double> logits, std::span<const std::uint8_t> labels,
                       std::span<const std::uint8_t> valid);

/// Same over a [B, L] logit matrix and flat [B, L] labels/mask.
template <typename T>
double bce_with_logits(const Matrix<T>& logits, std::span<const std::uint8_t> labels,
                       std::span<const std::uint8_t> valid);

}  // namespace lbkt
