#include "cade/net/network.hpp"

#include <algorithm>

#include "cade/nn/init.hpp"

namespace cade::net {

namespace {

template <typename Real>
Tensor<Real> batched(std::size_t n, const Dims& sample_dims) {
  Dims d{n};
  d.insert(d.end(), sample_dims.begin(), sample_dims.end());
  return Tensor<Real>(std::move(d));
}

template <typename Real>
Tensor<Real> sample_view(const Tensor<Real>& batch, std::size_t i) {
  Dims inner(batch.dims().begin() + 1, batch.dims().end());
  auto span = batch.slab_values(i);
  return Tensor<Real>(std::move(inner), std::vector<Real>(span.begin(), span.end()));
}

template <typename Real>
void store_sample(Tensor<Real>& batch, std::size_t i, const Tensor<Real>& sample) {
  auto dst = batch.slab_values(i);
  std::copy(sample.values().begin(), sample.values().end(), dst.begin());
}

}  // namespace

template <typename Real>
Network<Real>::Network(NetworkSpec spec, std::vector<Tensor<Real>> params)
    : spec_(std::move(spec)), layout_(parameter_layout(spec_)), params_(std::move(params)) {
  validate(spec_);
  if (params_.size() != layout_.size()) {
    throw ConfigError("network expects " + std::to_string(layout_.size()) + " parameter tensors, got " +
                      std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (params_[i].dims() != layout_[i].dims) {
      throw ConfigError("parameter " + layout_[i].name + " has shape " + dims_string(params_[i].dims()) +
                        ", expected " + dims_string(layout_[i].dims));
    }
  }
  first_param_.assign(spec_.layers.size(), -1);
  for (std::size_t i = layout_.size(); i-- > 0;) first_param_[layout_[i].layer] = std::ptrdiff_t(i & ~std::size_t{1});
}

template <typename Real>
Network<Real> Network<Real>::initialize(NetworkSpec spec, Rng& rng) {
  std::vector<Tensor<Real>> params;
  const auto layout = parameter_layout(spec);
  for (std::size_t i = 0; i < layout.size(); i += 2) {
    const nn::Fans fans = nn::fans_of(layout[i].dims);
    params.push_back(nn::glorot_uniform<Real>(layout[i].dims, fans, rng));
    params.push_back(nn::glorot_uniform<Real>(layout[i + 1].dims, fans, rng));
  }
  return Network(std::move(spec), std::move(params));
}

template <typename Real>
Tensor<Real> Network<Real>::forward(const Tensor<Real>& batch) const {
  return run(batch, nullptr, false, nullptr);
}

template <typename Real>
ForwardTrace<Real> Network<Real>::forward_train(const Tensor<Real>& batch, Rng& rng, bool training) const {
  ForwardTrace<Real> trace;
  trace.training = training;
  trace.output = run(batch, &rng, training, &trace);
  return trace;
}

template <typename Real>
Tensor<Real> Network<Real>::run(const Tensor<Real>& batch, Rng* rng, bool training, ForwardTrace<Real>* trace) const {
  Dims expected{batch.dims().empty() ? 0 : batch.dim(0)};
  expected.insert(expected.end(), spec_.input_dims.begin(), spec_.input_dims.end());
  if (batch.dims() != expected) {
    throw ConfigError("network input " + dims_string(batch.dims()) + " does not match N x " +
                      dims_string(spec_.input_dims));
  }
  const std::size_t n = batch.dim(0);
  if (n == 0) return Tensor<Real>({0, spec_.outputs()});
  if (trace) {
    trace->inputs.reserve(spec_.layers.size());
    trace->pool_argmax.resize(spec_.layers.size());
    trace->dropout_masks.resize(spec_.layers.size());
  }

  Tensor<Real> x = batch;
  for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
    const auto& kind = spec_.layers[li].kind;
    const std::ptrdiff_t pi = first_param_[li];
    Tensor<Real> y;
    if (const auto* c = std::get_if<nn::ConvSpec>(&kind)) {
      for (std::size_t s = 0; s < n; ++s) {
        Tensor<Real> out = nn::conv2d(sample_view(x, s), params_[std::size_t(pi)], params_[std::size_t(pi) + 1], *c);
        if (s == 0) y = batched<Real>(n, out.dims());
        store_sample(y, s, out);
      }
    } else if (const auto* p = std::get_if<nn::PoolSpec>(&kind)) {
      if (trace) trace->pool_argmax[li].resize(n);
      for (std::size_t s = 0; s < n; ++s) {
        auto r = nn::maxpool(sample_view(x, s), *p);
        if (s == 0) y = batched<Real>(n, r.output.dims());
        store_sample(y, s, r.output);
        if (trace) trace->pool_argmax[li][s] = std::move(r.argmax);
      }
    } else if (std::holds_alternative<Flatten>(kind)) {
      y = x.reshaped({n, x.size() / n});
    } else if (std::holds_alternative<nn::DenseSpec>(kind)) {
      y = nn::dense_batch(x, params_[std::size_t(pi)], params_[std::size_t(pi) + 1]);
    } else if (const auto* a = std::get_if<nn::ActivationKind>(&kind)) {
      y = nn::activate(x, *a);
    } else if (const auto* d = std::get_if<nn::DropoutSpec>(&kind)) {
      if (training && rng) {
        auto r = nn::dropout(x, *d, *rng, true);
        y = std::move(r.output);
        if (trace) trace->dropout_masks[li] = std::move(r.mask);
      } else {
        y = x;
        if (trace) trace->dropout_masks[li].assign(x.size(), 1);
      }
    }
    if (trace) trace->inputs.push_back(std::move(x));
    x = std::move(y);
  }

  if (spec_.head == HeadKind::softmax) {
    const std::size_t k = x.dim(1);
    for (std::size_t s = 0; s < n; ++s) {
      auto row = x.slab_values(s);
      Tensor<Real> probs = nn::softmax(Tensor<Real>({k}, std::vector<Real>(row.begin(), row.end())));
      std::copy(probs.values().begin(), probs.values().end(), row.begin());
    }
  }
  return x;
}

template <typename Real>
std::vector<Tensor<Real>> Network<Real>::backward(const ForwardTrace<Real>& trace,
                                                   const Tensor<Real>& grad_output) const {
  if (!trace.complete(spec_.layers.size())) throw StateError("backward called without a complete forward trace");
  if (grad_output.dims() != trace.output.dims()) {
    throw ShapeError("output gradient " + dims_string(grad_output.dims()) + " does not match output " +
                     dims_string(trace.output.dims()));
  }
  const std::size_t n = trace.output.dim(0);
  std::vector<Tensor<Real>> grads;
  for (const auto& p : params_) grads.emplace_back(p.dims());

  Tensor<Real> g = grad_output;
  if (spec_.head == HeadKind::softmax) {
    const std::size_t k = g.dim(1);
    for (std::size_t s = 0; s < n; ++s) {
      auto prow = trace.output.slab_values(s);
      auto grow = g.slab_values(s);
      Tensor<Real> gs = nn::softmax_backward(Tensor<Real>({k}, std::vector<Real>(prow.begin(), prow.end())),
                                             Tensor<Real>({k}, std::vector<Real>(grow.begin(), grow.end())));
      std::copy(gs.values().begin(), gs.values().end(), grow.begin());
    }
  }

  for (std::size_t li = spec_.layers.size(); li-- > 0;) {
    const auto& kind = spec_.layers[li].kind;
    const Tensor<Real>& x = trace.inputs[li];
    const std::ptrdiff_t pi = first_param_[li];
    Tensor<Real> gx;
    if (const auto* c = std::get_if<nn::ConvSpec>(&kind)) {
      gx = Tensor<Real>(x.dims());
      for (std::size_t s = 0; s < n; ++s) {
        Tensor<Real> gi = nn::conv2d_backward(sample_view(x, s), params_[std::size_t(pi)], *c, sample_view(g, s),
                                              grads[std::size_t(pi)], grads[std::size_t(pi) + 1]);
        store_sample(gx, s, gi);
      }
    } else if (std::holds_alternative<nn::PoolSpec>(kind)) {
      if (trace.pool_argmax[li].size() != n) throw StateError("missing pooling argmax cache");
      gx = Tensor<Real>(x.dims());
      Dims inner(x.dims().begin() + 1, x.dims().end());
      for (std::size_t s = 0; s < n; ++s) {
        store_sample(gx, s, nn::maxpool_backward(inner, trace.pool_argmax[li][s], sample_view(g, s)));
      }
    } else if (std::holds_alternative<Flatten>(kind)) {
      gx = g.reshaped(x.dims());
    } else if (std::holds_alternative<nn::DenseSpec>(kind)) {
      gx = nn::dense_batch_backward(x, params_[std::size_t(pi)], g, grads[std::size_t(pi)],
                                    grads[std::size_t(pi) + 1]);
    } else if (const auto* a = std::get_if<nn::ActivationKind>(&kind)) {
      gx = nn::activate_backward(x, *a, g);
    } else if (const auto* d = std::get_if<nn::DropoutSpec>(&kind)) {
      if (trace.dropout_masks[li].size() != x.size()) throw StateError("missing dropout mask cache");
      gx = trace.training ? nn::dropout_backward(trace.dropout_masks[li], *d, g) : g;
    }
    g = std::move(gx);
  }
  return grads;
}

template class Network<float>;
template class Network<double>;

}  // namespace cade::net
