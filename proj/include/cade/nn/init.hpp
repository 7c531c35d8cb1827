#pragma once

#include "cade/rng.hpp"
#include "cade/tensor.hpp"

namespace cade::nn {

struct Fans {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

/// Dense [out, in] -> (in, out); conv [C_out, C_in, F, F] -> (C_in F^2, C_out F^2);
/// a 1-D bias of length n -> (n, n).
Fans fans_of(const Dims& shape);

/// sqrt(6 / (fan_in + fan_out)).
double glorot_limit(const Fans& fans);

/// I.i.d. uniform on [-L, L] with L = glorot_limit(fans_of(shape)).
template <typename Real>
Tensor<Real> glorot_uniform(const Dims& shape, Rng& rng);

/// Same with explicit fans; used to draw a layer's bias with its weight fans.
template <typename Real>
Tensor<Real> glorot_uniform(const Dims& shape, const Fans& fans, Rng& rng);

}  // namespace cade::nn
