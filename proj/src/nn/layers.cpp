#include "cade/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace cade::nn {

namespace {

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMatrix<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMatrix<Real>>;

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;
  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

ConvGeometry geometry(const Dims& input, const ConvSpec& spec) {
  if (input.size() != 3) throw ShapeError("conv2d expects a C x H x W input, got " + dims_string(input));
  if (input[0] != spec.in_channels) {
    throw ShapeError("conv2d input has " + std::to_string(input[0]) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  return {input[0], input[1], input[2], spec.kernel, spec.stride, spec.padding(),
          conv_output_extent(input[1], spec), conv_output_extent(input[2], spec)};
}

template <typename Real>
void im2col(const Real* in, const ConvGeometry& g, Real* cols) {
  const std::size_t n = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        Real* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * n;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          Real* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, Real{0});
            continue;
          }
          const Real* src = in + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? Real{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename Real>
void col2im(const Real* cols, const ConvGeometry& g, Real* out) {
  const std::size_t n = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const Real* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * n;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          Real* dst = out + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const Real* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_weights(const Dims& w, const Dims& b, const ConvSpec& spec) {
  const Dims expected{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  if (w != expected) throw ShapeError("conv2d weights " + dims_string(w) + ", expected " + dims_string(expected));
  if (b != Dims{spec.out_channels}) throw ShapeError("conv2d bias " + dims_string(b));
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, const ConvSpec& spec) {
  if (spec.kernel == 0 || spec.stride == 0) throw SpecError("kernel and stride must be at least 1");
  if (spec.pad == PadMode::same && spec.kernel % 2 == 0) {
    throw SpecError("same padding requires an odd kernel, got " + std::to_string(spec.kernel));
  }
  const std::size_t padded = in + 2 * spec.padding();
  if (padded < spec.kernel) {
    throw SpecError("kernel " + std::to_string(spec.kernel) + " does not fit extent " + std::to_string(in));
  }
  if ((padded - spec.kernel) % spec.stride != 0) {
    throw SpecError("output extent (" + std::to_string(in) + " - " + std::to_string(spec.kernel) + " + " +
                    std::to_string(2 * spec.padding()) + ") / " + std::to_string(spec.stride) +
                    " + 1 is not an integer");
  }
  return (padded - spec.kernel) / spec.stride + 1;
}

std::size_t pool_output_extent(std::size_t in, const PoolSpec& spec) {
  if (spec.window == 0 || spec.stride == 0) throw SpecError("pool window and stride must be at least 1");
  if (in < spec.window) {
    throw ShapeError("pooling input extent " + std::to_string(in) + " smaller than window " +
                     std::to_string(spec.window));
  }
  return (in - spec.window) / spec.stride + 1;
}

ActivationKind ActivationKind::leaky_relu(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ArgumentError("leaky relu alpha must lie in [0, 1)");
  return {Kind::leaky_relu, alpha};
}

DropoutSpec::DropoutSpec(double prob) : p(prob) {
  if (!(p >= 0.0 && p < 1.0)) throw ArgumentError("dropout probability must lie in [0, 1)");
}

template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weights, const Tensor<Real>& bias,
                    const ConvSpec& spec) {
  const ConvGeometry g = geometry(input.dims(), spec);
  check_weights(weights.dims(), bias.dims(), spec);
  AlignedVector<Real> cols(g.rows() * g.cols());
  im2col(input.data(), g, cols.data());
  Tensor<Real> out({spec.out_channels, g.out_h, g.out_w});
  MatMap<Real> o(out.data(), Eigen::Index(spec.out_channels), Eigen::Index(g.cols()));
  ConstMatMap<Real> w(weights.data(), Eigen::Index(spec.out_channels), Eigen::Index(g.rows()));
  ConstMatMap<Real> c(cols.data(), Eigen::Index(g.rows()), Eigen::Index(g.cols()));
  o.noalias() = w * c;
  for (std::size_t k = 0; k < spec.out_channels; ++k) o.row(Eigen::Index(k)).array() += bias[k];
  return out;
}

template <typename Real>
Tensor<Real> conv2d_backward(const Tensor<Real>& input, const Tensor<Real>& weights, const ConvSpec& spec,
                             const Tensor<Real>& grad_output, Tensor<Real>& grad_weights, Tensor<Real>& grad_bias) {
  const ConvGeometry g = geometry(input.dims(), spec);
  check_weights(weights.dims(), grad_bias.dims(), spec);
  if (grad_output.dims() != Dims{spec.out_channels, g.out_h, g.out_w}) {
    throw ShapeError("conv2d_backward grad_output " + dims_string(grad_output.dims()));
  }
  if (grad_weights.dims() != weights.dims()) throw ShapeError("conv2d_backward weight gradient shape");

  AlignedVector<Real> cols(g.rows() * g.cols());
  im2col(input.data(), g, cols.data());
  ConstMatMap<Real> go(grad_output.data(), Eigen::Index(spec.out_channels), Eigen::Index(g.cols()));
  ConstMatMap<Real> c(cols.data(), Eigen::Index(g.rows()), Eigen::Index(g.cols()));
  ConstMatMap<Real> w(weights.data(), Eigen::Index(spec.out_channels), Eigen::Index(g.rows()));
  MatMap<Real> gw(grad_weights.data(), Eigen::Index(spec.out_channels), Eigen::Index(g.rows()));
  gw.noalias() += go * c.transpose();
  for (std::size_t k = 0; k < spec.out_channels; ++k) grad_bias[k] += go.row(Eigen::Index(k)).sum();

  MatMap<Real> gc(cols.data(), Eigen::Index(g.rows()), Eigen::Index(g.cols()));
  gc.noalias() = w.transpose() * go;
  Tensor<Real> grad_input(input.dims());
  col2im(cols.data(), g, grad_input.data());
  return grad_input;
}

template <typename Real>
PoolResult<Real> maxpool(const Tensor<Real>& input, const PoolSpec& spec) {
  if (input.rank() != 3) throw ShapeError("maxpool expects C x H x W, got " + dims_string(input.dims()));
  const std::size_t channels = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = pool_output_extent(h, spec), ow = pool_output_extent(w, spec);
  PoolResult<Real> r{Tensor<Real>({channels, oh, ow}), std::vector<std::uint32_t>(channels * oh * ow)};
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = (c * h + oy * spec.stride) * w + ox * spec.stride;
        for (std::size_t ky = 0; ky < spec.window; ++ky) {
          for (std::size_t kx = 0; kx < spec.window; ++kx) {
            const std::size_t idx = (c * h + oy * spec.stride + ky) * w + ox * spec.stride + kx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        r.output[o] = input[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

template <typename Real>
Tensor<Real> maxpool_backward(const Dims& input_dims, const std::vector<std::uint32_t>& argmax,
                              const Tensor<Real>& grad_output) {
  if (argmax.size() != grad_output.size()) throw ShapeError("maxpool_backward argmax/gradient size mismatch");
  Tensor<Real> grad(input_dims);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_output[i];
  return grad;
}

template <typename Real>
Tensor<Real> dense(const Tensor<Real>& input, const Tensor<Real>& weights, const Tensor<Real>& bias) {
  return dense_batch(input.reshaped({1, input.size()}), weights, bias).reshaped({weights.dim(0)});
}

template <typename Real>
Tensor<Real> dense_batch(const Tensor<Real>& input, const Tensor<Real>& weights, const Tensor<Real>& bias) {
  if (weights.rank() != 2 || input.rank() != 2 || input.dim(1) != weights.dim(1) ||
      bias.dims() != Dims{weights.dim(0)}) {
    throw ShapeError("dense: input " + dims_string(input.dims()) + ", weights " + dims_string(weights.dims()) +
                     ", bias " + dims_string(bias.dims()));
  }
  const auto n = Eigen::Index(input.dim(0)), n_in = Eigen::Index(weights.dim(1)),
             n_out = Eigen::Index(weights.dim(0));
  Tensor<Real> out({input.dim(0), weights.dim(0)});
  if (n == 0) return out;
  ConstMatMap<Real> x(input.data(), n, n_in);
  ConstMatMap<Real> w(weights.data(), n_out, n_in);
  MatMap<Real> y(out.data(), n, n_out);
  y.noalias() = x * w.transpose();
  Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> b(bias.data(), n_out);
  y.rowwise() += b;
  return out;
}

template <typename Real>
Tensor<Real> dense_batch_backward(const Tensor<Real>& input, const Tensor<Real>& weights,
                                  const Tensor<Real>& grad_output, Tensor<Real>& grad_weights,
                                  Tensor<Real>& grad_bias) {
  const auto n = Eigen::Index(input.dim(0)), n_in = Eigen::Index(weights.dim(1)),
             n_out = Eigen::Index(weights.dim(0));
  if (grad_output.dims() != Dims{input.dim(0), weights.dim(0)} || grad_weights.dims() != weights.dims()) {
    throw ShapeError("dense backward: gradient shapes disagree");
  }
  Tensor<Real> grad_input(input.dims());
  if (n == 0) return grad_input;
  ConstMatMap<Real> x(input.data(), n, n_in);
  ConstMatMap<Real> w(weights.data(), n_out, n_in);
  ConstMatMap<Real> gy(grad_output.data(), n, n_out);
  MatMap<Real> gw(grad_weights.data(), n_out, n_in);
  gw.noalias() += gy.transpose() * x;
  for (Eigen::Index j = 0; j < n_out; ++j) grad_bias[std::size_t(j)] += gy.col(j).sum();
  MatMap<Real> gx(grad_input.data(), n, n_in);
  gx.noalias() = gy * w;
  return grad_input;
}

template <typename Real>
Tensor<Real> activate(const Tensor<Real>& x, const ActivationKind& kind) {
  if (kind.kind == ActivationKind::Kind::identity) return x;
  Tensor<Real> y = x;
  const auto slope = static_cast<Real>(kind.slope());
  for (auto& v : y.values()) {
    if (!(v > Real{0})) v = kind.kind == ActivationKind::Kind::relu ? Real{0} : v * slope;
  }
  return y;
}

template <typename Real>
Tensor<Real> activate_backward(const Tensor<Real>& x, const ActivationKind& kind, const Tensor<Real>& grad_output) {
  if (x.size() != grad_output.size()) throw ShapeError("activation backward size mismatch");
  if (kind.kind == ActivationKind::Kind::identity) return grad_output;
  Tensor<Real> g = grad_output;
  const auto slope = static_cast<Real>(kind.slope());
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > Real{0})) g[i] *= slope;
  }
  return g;
}

template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& logits) {
  if (logits.size() == 0) throw ShapeError("softmax of an empty vector");
  const Real top = *std::max_element(logits.values().begin(), logits.values().end());
  Tensor<Real> out = logits;
  Real sum{0};
  for (auto& v : out.values()) {
    v = std::exp(v - top);
    sum += v;
  }
  for (auto& v : out.values()) v /= sum;
  return out;
}

template <typename Real>
Tensor<Real> softmax_backward(const Tensor<Real>& probs, const Tensor<Real>& grad_output) {
  if (probs.size() != grad_output.size()) throw ShapeError("softmax backward size mismatch");
  Real dot{0};
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * grad_output[i];
  Tensor<Real> g(probs.dims());
  for (std::size_t i = 0; i < probs.size(); ++i) g[i] = probs[i] * (grad_output[i] - dot);
  return g;
}

template <typename Real>
DropoutResult<Real> dropout(const Tensor<Real>& x, const DropoutSpec& spec, Rng& rng, bool training) {
  DropoutResult<Real> r{x, std::vector<std::uint8_t>(x.size(), 1)};
  if (!training || spec.p == 0.0) return r;
  const auto scale = static_cast<Real>(1.0 / (1.0 - spec.p));
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (rng.uniform() < spec.p) {
      r.mask[i] = 0;
      r.output[i] = Real{0};
    } else {
      r.output[i] = x[i] * scale;
    }
  }
  return r;
}

template <typename Real>
Tensor<Real> dropout_backward(const std::vector<std::uint8_t>& mask, const DropoutSpec& spec,
                              const Tensor<Real>& grad_output) {
  if (mask.size() != grad_output.size()) throw ShapeError("dropout backward mask size mismatch");
  Tensor<Real> g = grad_output;
  if (spec.p == 0.0) return g;
  const auto scale = static_cast<Real>(1.0 / (1.0 - spec.p));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask[i] ? g[i] * scale : Real{0};
  return g;
}

#define CADE_INSTANTIATE_LAYERS(Real)                                                                              \
  template Tensor<Real> conv2d(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, const ConvSpec&);    \
  template Tensor<Real> conv2d_backward(const Tensor<Real>&, const Tensor<Real>&, const ConvSpec&,                 \
                                        const Tensor<Real>&, Tensor<Real>&, Tensor<Real>&);                        \
  template PoolResult<Real> maxpool(const Tensor<Real>&, const PoolSpec&);                                         \
  template Tensor<Real> maxpool_backward(const Dims&, const std::vector<std::uint32_t>&, const Tensor<Real>&);     \
  template Tensor<Real> dense(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);                       \
  template Tensor<Real> dense_batch(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);                \
  template Tensor<Real> dense_batch_backward(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&,        \
                                             Tensor<Real>&, Tensor<Real>&);                                        \
  template Tensor<Real> activate(const Tensor<Real>&, const ActivationKind&);                                      \
  template Tensor<Real> activate_backward(const Tensor<Real>&, const ActivationKind&, const Tensor<Real>&);        \
  template Tensor<Real> softmax(const Tensor<Real>&);                                                              \
  template Tensor<Real> softmax_backward(const Tensor<Real>&, const Tensor<Real>&);                                \
  template DropoutResult<Real> dropout(const Tensor<Real>&, const DropoutSpec&, Rng&, bool);                       \
  template Tensor<Real> dropout_backward(const std::vector<std::uint8_t>&, const DropoutSpec&, const Tensor<Real>&);

CADE_INSTANTIATE_LAYERS(float)
CADE_INSTANTIATE_LAYERS(double)

#undef CADE_INSTANTIATE_LAYERS

}  // namespace cade::nn
