#pragma once

#include <cstdint>
#include <vector>

#include "cade/net/network_spec.hpp"
#include "cade/rng.hpp"

namespace cade::net {

/// Everything the backward pass needs from a training-mode forward pass.
template <typename Real>
struct ForwardTrace {
  std::vector<Tensor<Real>> inputs;                                // input of each layer, batch-leading
  std::vector<std::vector<std::vector<std::uint32_t>>> pool_argmax;  // [layer][sample]
  std::vector<std::vector<std::uint8_t>> dropout_masks;            // [layer]
  Tensor<Real> output;                                             // probabilities or regressions
  bool training = false;

  bool complete(std::size_t layer_count) const noexcept { return inputs.size() == layer_count; }
};

/// A NetworkSpec together with its parameter tensors (ordered as
/// parameter_layout()).
template <typename Real>
class Network {
 public:
  Network(NetworkSpec spec, std::vector<Tensor<Real>> params);

  /// Glorot-uniform weights and biases drawn from `rng`.
  static Network initialize(NetworkSpec spec, Rng& rng);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const std::vector<Tensor<Real>>& params() const noexcept { return params_; }
  std::vector<Tensor<Real>>& params() noexcept { return params_; }

  /// Inference on an N x C x H x W batch; returns N x outputs.
  Tensor<Real> forward(const Tensor<Real>& batch) const;

  /// Forward pass that records caches. Dropout is active only when
  /// `training` is set and draws from `rng`.
  ForwardTrace<Real> forward_train(const Tensor<Real>& batch, Rng& rng, bool training = true) const;

  /// Gradients of a loss w.r.t. every parameter, given d loss / d output.
  std::vector<Tensor<Real>> backward(const ForwardTrace<Real>& trace, const Tensor<Real>& grad_output) const;

  template <typename Other>
  Network<Other> cast() const {
    std::vector<Tensor<Other>> p;
    for (const auto& t : params_) p.push_back(t.template cast<Other>());
    return Network<Other>(spec_, std::move(p));
  }

 private:
  Tensor<Real> run(const Tensor<Real>& batch, Rng* rng, bool training, ForwardTrace<Real>* trace) const;

  NetworkSpec spec_;
  std::vector<ParamInfo> layout_;
  std::vector<std::ptrdiff_t> first_param_;  // per layer, index of its weight tensor or -1
  std::vector<Tensor<Real>> params_;
};

}  // namespace cade::net
