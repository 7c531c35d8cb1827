#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cade/error.hpp"
#include "cade/geometry.hpp"
#include "cade/tensor.hpp"

namespace cade::metrics {

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t positives() const noexcept { return tp + fn; }
  std::size_t negatives() const noexcept { return tn + fp; }
  std::size_t total() const noexcept { return tp + tn + fp + fn; }

  /// Tallies 0/1 predictions against 0/1 truth.
  static ConfusionCounts tally(std::span<const int> predicted, std::span<const int> truth);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// A metric value; `degenerate` marks a zero denominator, in which case the
/// value is a fixed convention (0 for ratios, 1 for two empty masks).
struct Score {
  double value = 0.0;
  bool degenerate = false;
};

Score accuracy(const ConfusionCounts& c);
Score precision(const ConfusionCounts& c);
Score recall(const ConfusionCounts& c);
Score f_beta(const ConfusionCounts& c, double beta = 1.0);

/// Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly,
/// ties counting one half.
double auc(std::span<const double> scores, std::span<const int> labels);

enum class MaeVariant { literal, per_coordinate };
std::string to_string(MaeVariant v);
MaeVariant mae_variant_from_string(const std::string& name);

struct MaeResult {
  double mae = 0.0;
  double sd = 0.0;  // population sd of the per-sample errors
  MaeVariant variant = MaeVariant::literal;
};

/// Box displacement between n x 4 predictions and targets. The literal
/// variant sums the four coordinate errors of a sample; the per-coordinate
/// variant averages them.
MaeResult box_mae(const TensorD& predicted, const TensorD& target, MaeVariant variant = MaeVariant::literal);
MaeResult box_mae(std::span<const BoxF> predicted, std::span<const BoxF> target,
                  MaeVariant variant = MaeVariant::literal);

Score dsc(const Mask& x, const Mask& y);
/// Boxes are rasterized onto an image of the given size before scoring.
Score box_dsc(const BoundingBox& a, const BoundingBox& b, std::size_t height, std::size_t width);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double mean_difference = 0.0;
  std::size_t n = 0;
  bool degenerate = false;  // zero variance of the differences
};

/// Paired two-sided t-test on d = a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace cade::metrics
