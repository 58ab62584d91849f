#pragma once

#include <Eigen/Core>

namespace lbkt {

// Row-major dense storage; sequences are [length, width] with one row per step.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

}  // namespace lbkt
