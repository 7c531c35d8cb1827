#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cade/geometry.hpp"
#include "cade/net/checkpoint.hpp"
#include "cade/nn/adadelta.hpp"

namespace cade::net {

/// Training samples in network input space. Classification sets fill
/// `labels` (1 = abnormal); detection sets fill `boxes` in input pixels.
struct Dataset {
  TensorF images;  // N x C x H x W
  std::vector<float> labels;
  std::vector<BoxF> boxes;
  /// Copied verbatim into the checkpoint stats (standardization statistics).
  std::vector<std::pair<std::string, double>> metadata;

  std::size_t size() const { return images.empty() ? 0 : images.dim(0); }
};

struct TrainConfig {
  std::size_t batch_size = 200;
  std::size_t epochs = 50;
  bool augment = true;
  nn::AdaDeltaConfig optimizer{};
  std::uint64_t seed = 1;
  double validation_fraction = 0.1;  // held out for per-epoch validation loss only
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;       // sample-weighted mean of batch losses
  double validation_loss = 0.0;  // NaN when nothing is held out
};

struct TrainResult {
  Checkpoint checkpoint;
  double initial_loss = 0.0;  // inference-mode loss on the training split before any step
  double final_loss = 0.0;    // same measure after the last epoch
  std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch AdaDelta training with optional on-the-fly flip augmentation.
/// Softmax heads use binary cross-entropy on the last class probability,
/// linear heads use MSE. Deterministic for a fixed seed.
TrainResult train(const NetworkSpec& spec, const Dataset& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Loss of `net` over `indices` of `data` in inference mode.
double evaluate_loss(const Network<float>& net, const Dataset& data, const std::vector<std::size_t>& indices,
                     std::size_t batch_size = 64);

/// Loss and output gradient for a batch of network outputs, picking the loss
/// by head kind.
template <typename Real>
std::pair<double, Tensor<Real>> head_loss(HeadKind head, const Tensor<Real>& output, const Tensor<Real>& targets);

/// Stacks targets for `indices` as an N x outputs tensor (labels as N x 1).
TensorF gather_targets(const NetworkSpec& spec, const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace cade::net
