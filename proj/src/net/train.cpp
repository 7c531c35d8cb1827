#include "cade/net/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "cade/nn/augment.hpp"
#include "cade/nn/loss.hpp"

namespace cade::net {

template <typename Real>
std::pair<double, Tensor<Real>> head_loss(HeadKind head, const Tensor<Real>& output, const Tensor<Real>& targets) {
  const std::size_t n = output.dim(0);
  if (head == HeadKind::linear) {
    auto r = nn::mse_loss(output, targets);
    return {double(r.loss), std::move(r.gradient)};
  }
  const std::size_t k = output.dim(1);
  if (targets.size() != n) throw ShapeError("classification targets must hold one label per sample");
  Tensor<Real> f({n});
  for (std::size_t i = 0; i < n; ++i) f[i] = output.at(i, k - 1);
  auto r = nn::binary_cross_entropy(f, targets.values());
  Tensor<Real> grad(output.dims());
  for (std::size_t i = 0; i < n; ++i) grad.at(i, k - 1) = r.gradient[i];
  return {double(r.loss), std::move(grad)};
}

template std::pair<double, TensorF> head_loss(HeadKind, const TensorF&, const TensorF&);
template std::pair<double, TensorD> head_loss(HeadKind, const TensorD&, const TensorD&);

namespace {

void check_dataset(const NetworkSpec& spec, const Dataset& data) {
  if (data.size() == 0) throw ArgumentError("training set is empty");
  Dims expected{data.size()};
  expected.insert(expected.end(), spec.input_dims.begin(), spec.input_dims.end());
  if (data.images.dims() != expected) {
    throw ConfigError("training images " + dims_string(data.images.dims()) + " do not match N x " +
                      dims_string(spec.input_dims));
  }
  if (spec.head == HeadKind::softmax) {
    if (data.labels.size() != data.size()) throw ConfigError("classifier training needs one label per image");
    for (float y : data.labels) {
      if (y != 0.0f && y != 1.0f) throw ConfigError("classification labels must be 0 or 1");
    }
  } else {
    if (spec.outputs() != 4) throw ConfigError("box regression needs a 4-output head");
    if (data.boxes.size() != data.size()) throw ConfigError("detector training needs one box per image");
  }
}

TensorF gather_images(const Dataset& data, const std::vector<std::size_t>& idx, std::size_t begin, std::size_t end) {
  Dims d = data.images.dims();
  d[0] = end - begin;
  TensorF out(d);
  for (std::size_t i = begin; i < end; ++i) {
    auto src = data.images.slab_values(idx[i]);
    std::copy(src.begin(), src.end(), out.slab_values(i - begin).begin());
  }
  return out;
}

}  // namespace

TensorF gather_targets(const NetworkSpec& spec, const Dataset& data, const std::vector<std::size_t>& indices) {
  if (spec.head == HeadKind::softmax) {
    TensorF t({indices.size(), 1});
    for (std::size_t i = 0; i < indices.size(); ++i) t[i] = data.labels[indices[i]];
    return t;
  }
  TensorF t({indices.size(), 4});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const BoxF& b = data.boxes[indices[i]];
    t.at(i, 0) = float(b.x_ul);
    t.at(i, 1) = float(b.y_ul);
    t.at(i, 2) = float(b.width);
    t.at(i, 3) = float(b.height);
  }
  return t;
}

double evaluate_loss(const Network<float>& net, const Dataset& data, const std::vector<std::size_t>& indices,
                     std::size_t batch_size) {
  if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (std::size_t b = 0; b < indices.size(); b += batch_size) {
    const std::size_t e = std::min(indices.size(), b + batch_size);
    std::vector<std::size_t> sub(indices.begin() + std::ptrdiff_t(b), indices.begin() + std::ptrdiff_t(e));
    const TensorF out = net.forward(gather_images(data, indices, b, e));
    total += head_loss(net.spec().head, out, gather_targets(net.spec(), data, sub)).first * double(e - b);
  }
  return total / double(indices.size());
}

TrainResult train(const NetworkSpec& spec, const Dataset& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (config.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (config.epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
  check_dataset(spec, data);

  const Rng root(config.seed);
  Rng init_rng = root.split(1);
  Rng order_rng = root.split(2);
  Rng dropout_rng = root.split(3);
  Rng augment_rng = root.split(4);
  Rng split_rng = root.split(5);

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::size_t held_out = static_cast<std::size_t>(std::floor(config.validation_fraction * double(all.size())));
  held_out = std::min(held_out, all.size() - 1);
  std::vector<std::size_t> train_idx = all, val_idx;
  if (held_out > 0) {
    split_rng.shuffle(std::span(all));
    val_idx.assign(all.begin(), all.begin() + std::ptrdiff_t(held_out));
    train_idx.assign(all.begin() + std::ptrdiff_t(held_out), all.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
  }

  Network<float> net = Network<float>::initialize(spec, init_rng);
  nn::AdaDeltaState<float> state(config.optimizer, net.params());
  TrainResult result;
  result.initial_loss = evaluate_loss(net, data, train_idx);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    order_rng.shuffle(std::span(order));
    double epoch_total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size, ++batch_no) {
      const std::size_t e = std::min(order.size(), b + config.batch_size);
      std::vector<std::size_t> ids(order.begin() + std::ptrdiff_t(b), order.begin() + std::ptrdiff_t(e));
      TensorF images = gather_images(data, order, b, e);
      TensorF targets = gather_targets(spec, data, ids);
      if (config.augment) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
          for (auto axis : {nn::FlipAxis::horizontal, nn::FlipAxis::vertical}) {
            if (!augment_rng.bernoulli(0.5)) continue;
            const TensorF sample = images.slab(i);
            std::optional<BoxF> box;
            if (spec.head == HeadKind::linear) {
              box = BoxF{targets.at(i, 0), targets.at(i, 1), targets.at(i, 2), targets.at(i, 3)};
            }
            auto flipped = nn::flip_augment(sample, box, axis);
            std::copy(flipped.image.values().begin(), flipped.image.values().end(), images.slab_values(i).begin());
            if (flipped.box) {
              targets.at(i, 0) = float(flipped.box->x_ul);
              targets.at(i, 1) = float(flipped.box->y_ul);
            }
          }
        }
      }
      auto trace = net.forward_train(images, dropout_rng, true);
      auto [loss, grad] = head_loss(spec.head, trace.output, targets);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no) + " (samples " + std::to_string(b) + ".." +
                           std::to_string(e - 1) + " of the shuffled order)");
      }
      auto grads = net.backward(trace, grad);
      nn::adadelta_step(net.params(), grads, state);
      epoch_total += loss * double(e - b);
    }
    EpochStats stats{epoch, epoch_total / double(order.size()), evaluate_loss(net, data, val_idx)};
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }

  result.final_loss = evaluate_loss(net, data, train_idx);
  result.checkpoint = to_checkpoint(net);
  record_architecture(result.checkpoint, spec.kind, spec.options);
  result.checkpoint.set_stat("hp.rho", config.optimizer.rho);
  result.checkpoint.set_stat("hp.epsilon", config.optimizer.epsilon);
  result.checkpoint.set_stat("hp.learning_rate", config.optimizer.learning_rate);
  result.checkpoint.set_stat("hp.epochs", double(config.epochs));
  result.checkpoint.set_stat("hp.batch_size", double(config.batch_size));
  result.checkpoint.set_stat("hp.augment", config.augment ? 1.0 : 0.0);
  result.checkpoint.set_stat("hp.seed", double(config.seed));
  for (const auto& [k, v] : data.metadata) result.checkpoint.set_stat(k, v);
  return result;
}

}  // namespace cade::net
