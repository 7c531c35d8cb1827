#include "cade/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace cade::metrics {

namespace {

Score ratio(double num, double den) {
  if (den == 0.0) return {0.0, true};
  return {num / den, false};
}

}  // namespace

ConfusionCounts ConfusionCounts::tally(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("confusion tally: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if ((predicted[i] != 0 && predicted[i] != 1) || (truth[i] != 0 && truth[i] != 1)) {
      throw ArgumentError("confusion tally expects 0/1 labels");
    }
    if (truth[i]) {
      predicted[i] ? ++c.tp : ++c.fn;
    } else {
      predicted[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

Score accuracy(const ConfusionCounts& c) { return ratio(double(c.tp + c.tn), double(c.positives() + c.negatives())); }

Score precision(const ConfusionCounts& c) { return ratio(double(c.tp), double(c.tp + c.fp)); }

Score recall(const ConfusionCounts& c) { return ratio(double(c.tp), double(c.tp + c.fn)); }

Score f_beta(const ConfusionCounts& c, double beta) {
  if (!(beta > 0.0)) throw ArgumentError("f_beta needs beta > 0");
  const Score p = precision(c), r = recall(c);
  const double b2 = beta * beta;
  Score s = ratio((1 + b2) * p.value * r.value, b2 * p.value + r.value);
  s.degenerate = s.degenerate || p.degenerate || r.degenerate;
  return s;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (double s : scores) {
    if (!std::isfinite(s)) throw ArgumentError("auc: non-finite score");
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive ranks with ties sharing their mean rank.
  double rank_sum = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mean_rank = 0.5 * double(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      const int l = labels[order[k]];
      if (l == 1) {
        rank_sum += mean_rank;
        ++pos;
      } else if (l == 0) {
        ++neg;
      } else {
        throw ArgumentError("auc expects 0/1 labels");
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw ArgumentError("auc needs both classes present");
  const double u = rank_sum - double(pos) * double(pos + 1) / 2.0;
  return u / (double(pos) * double(neg));
}

std::string to_string(MaeVariant v) { return v == MaeVariant::literal ? "literal" : "per_coordinate"; }

MaeVariant mae_variant_from_string(const std::string& name) {
  if (name == "literal") return MaeVariant::literal;
  if (name == "per_coordinate") return MaeVariant::per_coordinate;
  throw ConfigError("unknown mae variant '" + name + "' (expected literal or per_coordinate)");
}

MaeResult box_mae(const TensorD& predicted, const TensorD& target, MaeVariant variant) {
  if (predicted.rank() != 2 || predicted.dim(1) != 4 || predicted.dims() != target.dims()) {
    throw ShapeError("box_mae needs two n x 4 tensors, got " + dims_string(predicted.dims()) + " and " +
                     dims_string(target.dims()));
  }
  const std::size_t n = predicted.dim(0);
  if (n == 0) throw ArgumentError("box_mae needs at least one box");
  const double scale = variant == MaeVariant::literal ? 1.0 : 0.25;
  std::vector<double> per(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += std::abs(predicted.at(i, j) - target.at(i, j));
    per[i] = s * scale;
  }
  const double mean = std::accumulate(per.begin(), per.end(), 0.0) / double(n);
  double ss = 0.0;
  for (double v : per) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / double(n)), variant};
}

MaeResult box_mae(std::span<const BoxF> predicted, std::span<const BoxF> target, MaeVariant variant) {
  if (predicted.size() != target.size()) throw ShapeError("box_mae: box lists differ in length");
  if (predicted.empty()) throw ArgumentError("box_mae needs at least one box");
  TensorD f({predicted.size(), 4}), y(f.dims());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const BoxF& a = predicted[i];
    const BoxF& b = target[i];
    f.at(i, 0) = a.x_ul, f.at(i, 1) = a.y_ul, f.at(i, 2) = a.width, f.at(i, 3) = a.height;
    y.at(i, 0) = b.x_ul, y.at(i, 1) = b.y_ul, y.at(i, 2) = b.width, y.at(i, 3) = b.height;
  }
  return box_mae(f, y, variant);
}

Score dsc(const Mask& x, const Mask& y) {
  if (x.height != y.height || x.width != y.width) {
    throw ShapeError("dsc: masks " + std::to_string(x.height) + "x" + std::to_string(x.width) + " and " +
                     std::to_string(y.height) + "x" + std::to_string(y.width) + " differ");
  }
  std::size_t inter = 0, nx = 0, ny = 0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const bool a = x.data[i] != 0, b = y.data[i] != 0;
    nx += a;
    ny += b;
    inter += a && b;
  }
  if (nx + ny == 0) return {1.0, true};
  return {2.0 * double(inter) / double(nx + ny), false};
}

Score box_dsc(const BoundingBox& a, const BoundingBox& b, std::size_t height, std::size_t width) {
  return dsc(rasterize_box(a, height, width), rasterize_box(b, height, width));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("paired t-test: samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw ArgumentError("paired t-test needs at least two pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / double(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  TTestResult r;
  r.n = n;
  r.df = double(n - 1);
  r.mean_difference = mean;
  const double sd = std::sqrt(ss / double(n - 1));
  if (!(sd > 0.0)) {
    r.degenerate = true;
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), mean);
      r.p = 0.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(double(n)));
  const boost::math::students_t dist(r.df);
  r.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t))));
  return r;
}

}  // namespace cade::metrics
