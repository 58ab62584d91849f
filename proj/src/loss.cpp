#include "lbkt/loss.hpp"

#include <stdexcept>
#include <vector>

#include "lbkt/error.hpp"

namespace lbkt {

double bce_with_logits(std::span<const double> logits, std::span<const std::uint8_t> labels,
                       std::span<const std::uint8_t> valid) {
  if (logits.size() != labels.size() || logits.size() != valid.size()) {
    throw std::invalid_argument("bce_with_logits: shapes differ");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!valid[i]) continue;
    sum += bce_term(logits[i], labels[i]);
    ++count;
  }
  if (count == 0) throw Error("bce_with_logits: no valid positions");
  return sum / static_cast<double>(count);
}

template <typename T>
double bce_with_logits(const Matrix<T>& logits, std::span<const std::uint8_t> labels,
                       std::span<const std::uint8_t> valid) {
  std::vector<double> flat(static_cast<std::size_t>(logits.size()));
  // Matrix is row-major, so data() is already [B, L] order.
  std::transform(logits.data(), logits.data() + logits.size(), flat.begin(),
                 [](T v) { return static_cast<double>(v); });
  return bce_with_logits(std::span<const double>(flat), labels, valid);
}

template double bce_with_logits<float>(const Matrix<float>&, std::span<const std::uint8_t>,
                                       std::span<const std::uint8_t>);
template double bce_with_logits<double>(const Matrix<double>&, std::span<const std::uint8_t>,
                                        std::span<const std::uint8_t>);

}  // namespace lbkt
