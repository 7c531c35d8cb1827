#pragma once

#include <optional>

#include "cade/geometry.hpp"
#include "cade/tensor.hpp"

namespace cade::nn {

enum class FlipAxis { horizontal, vertical };

template <typename Real>
struct FlipResult {
  Tensor<Real> image;
  std::optional<BoxF> box;
};

/// Mirrors a C x H x W image. A horizontal flip maps x_ul to W - x_ul - width;
/// a vertical flip maps y_ul to H - y_ul - height.
template <typename Real>
FlipResult<Real> flip_augment(const Tensor<Real>& image, std::optional<BoxF> box, FlipAxis axis);

}  // namespace cade::nn
