#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cade/geometry.hpp"
#include "cade/imaging/study.hpp"

namespace cade::imaging {

/// 3x3 median with replicated borders.
TensorF median_filter(const TensorF& slice);

/// Per-sequence scalar mean and standard deviation over every training pixel.
struct StandardizationStats {
  std::array<double, kSequenceCount> mean{};
  std::array<double, kSequenceCount> std{1.0, 1.0, 1.0, 1.0};

  /// Checkpoint-style (name, value) pairs: "std.mean.T1", "std.sd.T1", ...
  std::vector<std::pair<std::string, double>> to_pairs() const;
  static StandardizationStats from_lookup(const std::function<std::optional<double>(const std::string&)>& lookup);
};

/// ConfigError when a sequence has zero variance or no pixels.
StandardizationStats compute_stats(std::span<const Study> training);
Study standardize(const Study& study, const StandardizationStats& stats);

/// Corner-aligned bilinear resampling of an H x W slice.
TensorF resize_bilinear(const TensorF& slice, std::size_t out_height, std::size_t out_width);

/// Scales a box by (to / from) per axis, rounds half-up, and clamps it inside
/// the target frame. Dims are (height, width). ArgumentError on degenerate
/// dims; the result may be invalid (non-positive size) if the input was.
BoundingBox rescale_box(const BoxF& box, std::pair<std::size_t, std::size_t> from,
                        std::pair<std::size_t, std::size_t> to);
BoundingBox rescale_box(const BoundingBox& box, std::pair<std::size_t, std::size_t> from,
                        std::pair<std::size_t, std::size_t> to);

/// External bias-field correction runs before this pipeline; identity here.
Study bias_field_passthrough(Study study);

/// Median filter + standardization applied slice by slice at native size.
Study preprocess_native(const Study& study, const StandardizationStats& stats);

/// Median filter only (the input to compute_stats).
Study median_filter_study(const Study& study);

/// Network input for every slice: S x 4 x size x size, from an already
/// filtered and standardized study.
TensorF network_input(const Study& preprocessed, std::size_t size = 96);

}  // namespace cade::imaging
