#include <algorithm>
#include <cmath>

#include "cade/nn/adadelta.hpp"
#include "cade/nn/augment.hpp"
#include "cade/nn/init.hpp"
#include "cade/nn/loss.hpp"

namespace cade::nn {

template <typename Real>
LossResult<Real> binary_cross_entropy(const Tensor<Real>& f, std::span<const Real> y) {
  const std::size_t n = f.size();
  if (n == 0) throw ArgumentError("binary cross-entropy of an empty batch");
  if (y.size() != n) throw ShapeError("binary cross-entropy: label count differs from prediction count");
  LossResult<Real> r{Real{0}, Tensor<Real>(f.dims())};
  const double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(static_cast<double>(f[i]), lo, hi);
    const double label = static_cast<double>(y[i]);
    total += -label * std::log(p) - (1.0 - label) * std::log(1.0 - p);
    r.gradient[i] = static_cast<Real>((p - label) / (p * (1.0 - p)) / static_cast<double>(n));
  }
  r.loss = static_cast<Real>(total / static_cast<double>(n));
  return r;
}

template <typename Real>
LossResult<Real> mse_loss(const Tensor<Real>& f, const Tensor<Real>& y) {
  if (f.dims() != y.dims()) {
    throw ShapeError("mse: prediction " + dims_string(f.dims()) + " vs target " + dims_string(y.dims()));
  }
  if (f.rank() != 2 || f.dim(0) == 0) throw ShapeError("mse expects a non-empty n x k batch");
  const double n = static_cast<double>(f.dim(0)), k = static_cast<double>(f.dim(1));
  LossResult<Real> r{Real{0}, Tensor<Real>(f.dims())};
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = static_cast<double>(f[i]) - static_cast<double>(y[i]);
    total += d * d;
    r.gradient[i] = static_cast<Real>(2.0 * d / (k * n));
  }
  r.loss = static_cast<Real>(total / (k * n));
  return r;
}

template <typename Real>
AdaDeltaState<Real>::AdaDeltaState(AdaDeltaConfig cfg, const std::vector<Tensor<Real>>& params) : config(cfg) {
  if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw ArgumentError("adadelta rho must lie in (0, 1)");
  if (!(cfg.epsilon > 0.0)) throw ArgumentError("adadelta epsilon must be positive");
  for (const auto& p : params) {
    mean_sq_grad.emplace_back(p.dims());
    mean_sq_update.emplace_back(p.dims());
  }
}

template <typename Real>
void adadelta_step(std::vector<Tensor<Real>>& params, const std::vector<Tensor<Real>>& grads,
                   AdaDeltaState<Real>& state) {
  if (params.size() != grads.size() || params.size() != state.mean_sq_grad.size()) {
    throw ShapeError("adadelta: parameter, gradient and accumulator counts differ");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].dims() != grads[t].dims() || params[t].dims() != state.mean_sq_grad[t].dims()) {
      throw ShapeError("adadelta: shape mismatch in parameter tensor " + std::to_string(t));
    }
    for (auto g : grads[t].values()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("adadelta: non-finite gradient in parameter tensor " + std::to_string(t));
      }
    }
  }
  const Real rho = static_cast<Real>(state.config.rho);
  const Real eps = static_cast<Real>(state.config.epsilon);
  const Real lr = static_cast<Real>(state.config.learning_rate);
  for (std::size_t t = 0; t < params.size(); ++t) {
    Real* x = params[t].data();
    const Real* g = grads[t].data();
    Real* eg = state.mean_sq_grad[t].data();
    Real* ed = state.mean_sq_update[t].data();
    for (std::size_t i = 0, n = params[t].size(); i < n; ++i) {
      eg[i] = rho * eg[i] + (Real{1} - rho) * g[i] * g[i];
      const Real dx = -(std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps)) * g[i];
      ed[i] = rho * ed[i] + (Real{1} - rho) * dx * dx;
      x[i] += lr * dx;
    }
  }
}

Fans fans_of(const Dims& shape) {
  if (shape.size() == 1) return {shape[0], shape[0]};
  if (shape.size() == 2) return {shape[1], shape[0]};
  if (shape.size() == 4) {
    const std::size_t area = shape[2] * shape[3];
    return {shape[1] * area, shape[0] * area};
  }
  throw ArgumentError("cannot derive fans from shape " + dims_string(shape));
}

double glorot_limit(const Fans& fans) {
  if (fans.fan_in == 0 || fans.fan_out == 0) throw ArgumentError("glorot initialization needs non-zero fans");
  return std::sqrt(6.0 / static_cast<double>(fans.fan_in + fans.fan_out));
}

template <typename Real>
Tensor<Real> glorot_uniform(const Dims& shape, const Fans& fans, Rng& rng) {
  const double limit = glorot_limit(fans);
  Tensor<Real> t(shape);
  for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(-limit, limit));
  return t;
}

template <typename Real>
Tensor<Real> glorot_uniform(const Dims& shape, Rng& rng) {
  return glorot_uniform<Real>(shape, fans_of(shape), rng);
}

template <typename Real>
FlipResult<Real> flip_augment(const Tensor<Real>& image, std::optional<BoxF> box, FlipAxis axis) {
  if (image.rank() != 3) throw ShapeError("flip expects C x H x W, got " + dims_string(image.dims()));
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (box) {
    if (!(box->width > 0 && box->height > 0 && box->x_ul >= 0 && box->y_ul >= 0 &&
          box->x_ul + box->width <= double(w) && box->y_ul + box->height <= double(h))) {
      throw ArgumentError("flip: bounding box lies outside the image");
    }
  }
  FlipResult<Real> r{Tensor<Real>(image.dims()), box};
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        r.image.at(c, y, x) = axis == FlipAxis::horizontal ? image.at(c, y, w - 1 - x) : image.at(c, h - 1 - y, x);
      }
    }
  }
  if (r.box) {
    if (axis == FlipAxis::horizontal) {
      r.box->x_ul = double(w) - box->x_ul - box->width;
    } else {
      r.box->y_ul = double(h) - box->y_ul - box->height;
    }
  }
  return r;
}

#define CADE_INSTANTIATE_TRAINING_OPS(Real)                                                            \
  template LossResult<Real> binary_cross_entropy(const Tensor<Real>&, std::span<const Real>);          \
  template LossResult<Real> mse_loss(const Tensor<Real>&, const Tensor<Real>&);                        \
  template struct AdaDeltaState<Real>;                                                                 \
  template void adadelta_step(std::vector<Tensor<Real>>&, const std::vector<Tensor<Real>>&,            \
                              AdaDeltaState<Real>&);                                                   \
  template Tensor<Real> glorot_uniform(const Dims&, const Fans&, Rng&);                                \
  template Tensor<Real> glorot_uniform(const Dims&, Rng&);                                             \
  template FlipResult<Real> flip_augment(const Tensor<Real>&, std::optional<BoxF>, FlipAxis);

CADE_INSTANTIATE_TRAINING_OPS(float)
CADE_INSTANTIATE_TRAINING_OPS(double)

#undef CADE_INSTANTIATE_TRAINING_OPS

}  // namespace cade::nn
