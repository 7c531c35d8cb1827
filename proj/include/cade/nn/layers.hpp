#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cade/rng.hpp"
#include "cade/tensor.hpp"

namespace cade::nn {

enum class PadMode { valid, same };

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  PadMode pad = PadMode::valid;

  std::size_t padding() const noexcept { return pad == PadMode::same ? (kernel - 1) / 2 : 0; }
  std::size_t param_count() const noexcept { return out_channels * (in_channels * kernel * kernel + 1); }
};

/// Output extent of a convolution along one axis: (in - F + 2P) / stride + 1.
/// Throws SpecError when the division is not exact or the window does not fit.
std::size_t conv_output_extent(std::size_t in, const ConvSpec& spec);

struct PoolSpec {
  std::size_t window = 2;
  std::size_t stride = 2;
};

/// floor((in - window) / stride) + 1; trailing rows/columns that do not fill
/// a window are dropped.
std::size_t pool_output_extent(std::size_t in, const PoolSpec& spec);

struct DenseSpec {
  std::size_t in_units = 1;
  std::size_t out_units = 1;

  std::size_t param_count() const noexcept { return out_units * (in_units + 1); }
};

struct ActivationKind {
  enum class Kind { relu, leaky_relu, identity };
  Kind kind = Kind::relu;
  double alpha = 0.0;

  static ActivationKind relu() { return {Kind::relu, 0.0}; }
  static ActivationKind leaky_relu(double alpha);
  static ActivationKind identity() { return {Kind::identity, 0.0}; }
  double slope() const noexcept { return kind == Kind::relu ? 0.0 : kind == Kind::identity ? 1.0 : alpha; }
};

struct DropoutSpec {
  double p = 0.0;
  explicit DropoutSpec(double prob = 0.0);
};

// --- convolution -----------------------------------------------------------

/// Cross-correlation of a C_in x H x W input with C_out x C_in x F x F
/// weights. `same` padding is symmetric zero padding of (F-1)/2.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weights, const Tensor<Real>& bias,
                    const ConvSpec& spec);

/// Returns the gradient w.r.t. the input and accumulates (+=) the weight and
/// bias gradients.
template <typename Real>
Tensor<Real> conv2d_backward(const Tensor<Real>& input, const Tensor<Real>& weights, const ConvSpec& spec,
                             const Tensor<Real>& grad_output, Tensor<Real>& grad_weights, Tensor<Real>& grad_bias);

// --- pooling ---------------------------------------------------------------

template <typename Real>
struct PoolResult {
  Tensor<Real> output;
  std::vector<std::uint32_t> argmax;  // flat input index of each output's winner
};

template <typename Real>
PoolResult<Real> maxpool(const Tensor<Real>& input, const PoolSpec& spec = {});

template <typename Real>
PoolResult<Real> maxpool2x2(const Tensor<Real>& input) {
  return maxpool(input, PoolSpec{});
}

template <typename Real>
Tensor<Real> maxpool_backward(const Dims& input_dims, const std::vector<std::uint32_t>& argmax,
                              const Tensor<Real>& grad_output);

// --- dense -----------------------------------------------------------------

/// w.x + b for a single vector.
template <typename Real>
Tensor<Real> dense(const Tensor<Real>& input, const Tensor<Real>& weights, const Tensor<Real>& bias);

/// Row-wise affine map of an N x n_in batch.
template <typename Real>
Tensor<Real> dense_batch(const Tensor<Real>& input, const Tensor<Real>& weights, const Tensor<Real>& bias);

/// Input gradient for an N x n_in batch; accumulates weight/bias gradients.
template <typename Real>
Tensor<Real> dense_batch_backward(const Tensor<Real>& input, const Tensor<Real>& weights,
                                  const Tensor<Real>& grad_output, Tensor<Real>& grad_weights,
                                  Tensor<Real>& grad_bias);

// --- elementwise -----------------------------------------------------------

template <typename Real>
Tensor<Real> activate(const Tensor<Real>& x, const ActivationKind& kind);

template <typename Real>
Tensor<Real> activate_backward(const Tensor<Real>& x, const ActivationKind& kind, const Tensor<Real>& grad_output);

/// Max-subtracted softmax over a K-vector.
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& logits);

/// Vector-Jacobian product of softmax given its output `probs`.
template <typename Real>
Tensor<Real> softmax_backward(const Tensor<Real>& probs, const Tensor<Real>& grad_output);

template <typename Real>
struct DropoutResult {
  Tensor<Real> output;
  std::vector<std::uint8_t> mask;  // 1 = kept
};

/// Inverted dropout. In inference mode the output is a copy of `x` and the
/// mask keeps everything.
template <typename Real>
DropoutResult<Real> dropout(const Tensor<Real>& x, const DropoutSpec& spec, Rng& rng, bool training);

template <typename Real>
Tensor<Real> dropout_backward(const std::vector<std::uint8_t>& mask, const DropoutSpec& spec,
                              const Tensor<Real>& grad_output);

}  // namespace cade::nn
