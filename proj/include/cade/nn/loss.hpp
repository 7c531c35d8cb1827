#pragma once

#include <span>

#include "cade/tensor.hpp"

namespace cade::nn {

/// Probability clamp applied before taking logarithms.
inline constexpr double kProbabilityClamp = 1e-7;

template <typename Real>
struct LossResult {
  Real loss{};
  Tensor<Real> gradient;  // d loss / d prediction, same shape as the predictions
};

/// Batch-mean binary cross-entropy of predicted probabilities `f` against
/// 0/1 labels `y`. Predictions are clamped to [1e-7, 1 - 1e-7].
template <typename Real>
LossResult<Real> binary_cross_entropy(const Tensor<Real>& f, std::span<const Real> y);

/// (1 / 4n) sum (f - y)^2 over an n x 4 batch of boxes; any n x k works.
template <typename Real>
LossResult<Real> mse_loss(const Tensor<Real>& f, const Tensor<Real>& y);

}  // namespace cade::nn
