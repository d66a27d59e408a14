#pragma once

#include <span>
#include <vector>

#include "speckle/learn.hpp"

namespace speckle::detail {

/// Per-layer inputs (features x batch) and im2col buffers kept for backpropagation.
template <typename Scalar>
struct Cache {
  std::vector<Matrix<Scalar>> inputs;
  std::vector<Matrix<Scalar>> cols;
};

template <typename Scalar>
void check_params(const NetworkParams<Scalar>& p);

/// Logits (10 x batch) for inputs laid out one sample per column.
template <typename Scalar>
Matrix<Scalar> forward_cols(const NetworkParams<Scalar>& p, const Matrix<Scalar>& x, Cache<Scalar>* cache);

/// Mean cross-entropy of `logits`; fills `grad`.
template <typename Scalar>
Scalar backward_cols(const NetworkParams<Scalar>& p, const Matrix<Scalar>& logits, const Cache<Scalar>& cache,
                     std::span<const std::uint8_t> labels, NetworkParams<Scalar>& grad);

}  // namespace speckle::detail
