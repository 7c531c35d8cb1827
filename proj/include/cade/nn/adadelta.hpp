#pragma once

#include <vector>

#include "cade/tensor.hpp"

namespace cade::nn {

struct AdaDeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-8;
  double learning_rate = 1.0;
};

/// Running averages of squared gradients and squared updates, one pair of
/// tensors per parameter tensor.
template <typename Real>
struct AdaDeltaState {
  AdaDeltaConfig config;
  std::vector<Tensor<Real>> mean_sq_grad;
  std::vector<Tensor<Real>> mean_sq_update;

  AdaDeltaState() = default;
  AdaDeltaState(AdaDeltaConfig cfg, const std::vector<Tensor<Real>>& params);
};

/// One AdaDelta update applied in place to `params`. Throws NumericError if
/// any gradient is not finite, before touching any state.
template <typename Real>
void adadelta_step(std::vector<Tensor<Real>>& params, const std::vector<Tensor<Real>>& grads,
                   AdaDeltaState<Real>& state);

}  // namespace cade::nn
