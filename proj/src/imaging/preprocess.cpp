#include "cade/imaging/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace cade::imaging {

TensorF median_filter(const TensorF& slice) {
  if (slice.rank() != 2) throw ShapeError("median_filter expects H x W, got " + dims_string(slice.dims()));
  const std::size_t h = slice.dim(0), w = slice.dim(1);
  TensorF out(slice.dims());
  std::array<float, 9> window{};
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t k = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        const std::size_t yy = std::size_t(std::clamp<long>(long(y) + dy, 0, long(h) - 1));
        for (int dx = -1; dx <= 1; ++dx) {
          const std::size_t xx = std::size_t(std::clamp<long>(long(x) + dx, 0, long(w) - 1));
          window[k++] = slice.at(yy, xx);
        }
      }
      std::nth_element(window.begin(), window.begin() + 4, window.end());
      out.at(y, x) = window[4];
    }
  }
  return out;
}

std::vector<std::pair<std::string, double>> StandardizationStats::to_pairs() const {
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < kSequenceCount; ++i) {
    out.emplace_back("std.mean." + std::string(kSequenceNames[i]), mean[i]);
    out.emplace_back("std.sd." + std::string(kSequenceNames[i]), std[i]);
  }
  return out;
}

StandardizationStats StandardizationStats::from_lookup(
    const std::function<std::optional<double>(const std::string&)>& lookup) {
  StandardizationStats s;
  for (std::size_t i = 0; i < kSequenceCount; ++i) {
    const std::string name(kSequenceNames[i]);
    const auto m = lookup("std.mean." + name);
    const auto sd = lookup("std.sd." + name);
    if (!m || !sd) throw ConfigError("standardization statistics for " + name + " are missing");
    if (!(*sd > 0.0)) throw ConfigError("standardization sd for " + name + " must be positive");
    s.mean[i] = *m;
    s.std[i] = *sd;
  }
  return s;
}

StandardizationStats compute_stats(std::span<const Study> training) {
  StandardizationStats stats;
  for (std::size_t q = 0; q < kSequenceCount; ++q) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& s : training) {
      for (float v : s.sequences[q].values()) sum += v;
      count += s.sequences[q].size();
    }
    if (count == 0) throw ConfigError("no training pixels for " + std::string(kSequenceNames[q]));
    const double mean = sum / double(count);
    double ss = 0.0;
    for (const auto& s : training) {
      for (float v : s.sequences[q].values()) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / double(count));
    if (!(sd > 0.0)) throw ConfigError("zero variance in training sequence " + std::string(kSequenceNames[q]));
    stats.mean[q] = mean;
    stats.std[q] = sd;
  }
  return stats;
}

Study standardize(const Study& study, const StandardizationStats& stats) {
  Study out = study;
  for (std::size_t q = 0; q < kSequenceCount; ++q) {
    if (!(stats.std[q] > 0.0)) throw ConfigError("standardization sd must be positive");
    const double m = stats.mean[q], inv = 1.0 / stats.std[q];
    for (auto& v : out.sequences[q].values()) v = static_cast<float>((v - m) * inv);
  }
  return out;
}

TensorF resize_bilinear(const TensorF& slice, std::size_t out_height, std::size_t out_width) {
  if (slice.rank() != 2) throw ShapeError("resize expects H x W, got " + dims_string(slice.dims()));
  if (out_height == 0 || out_width == 0) throw ArgumentError("resize target dims must be positive");
  const std::size_t h = slice.dim(0), w = slice.dim(1);
  const double sy = out_height > 1 ? double(h - 1) / double(out_height - 1) : 0.0;
  const double sx = out_width > 1 ? double(w - 1) / double(out_width - 1) : 0.0;
  TensorF out({out_height, out_width});
  for (std::size_t y = 0; y < out_height; ++y) {
    const double fy = double(y) * sy;
    const std::size_t y0 = std::min(std::size_t(fy), h - 1), y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - double(y0);
    for (std::size_t x = 0; x < out_width; ++x) {
      const double fx = double(x) * sx;
      const std::size_t x0 = std::min(std::size_t(fx), w - 1), x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - double(x0);
      const double top = (1 - tx) * slice.at(y0, x0) + tx * slice.at(y0, x1);
      const double bottom = (1 - tx) * slice.at(y1, x0) + tx * slice.at(y1, x1);
      out.at(y, x) = static_cast<float>((1 - ty) * top + ty * bottom);
    }
  }
  return out;
}

namespace {

int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

// Keeps [start, start + length) inside [0, limit).
void clamp_span(int& start, int& length, int limit) {
  if (start < 0) {
    length += start;
    start = 0;
  }
  if (start > limit - 1) start = limit - 1;
  if (start + length > limit) length = limit - start;
}

}  // namespace

BoundingBox rescale_box(const BoxF& box, std::pair<std::size_t, std::size_t> from,
                        std::pair<std::size_t, std::size_t> to) {
  if (from.first == 0 || from.second == 0 || to.first == 0 || to.second == 0) {
    throw ArgumentError("rescale_box needs positive dims");
  }
  const double sy = double(to.first) / double(from.first);
  const double sx = double(to.second) / double(from.second);
  BoundingBox b{round_half_up(box.x_ul * sx), round_half_up(box.y_ul * sy), round_half_up(box.width * sx),
                round_half_up(box.height * sy)};
  clamp_span(b.x_ul, b.width, int(to.second));
  clamp_span(b.y_ul, b.height, int(to.first));
  return b;
}

BoundingBox rescale_box(const BoundingBox& box, std::pair<std::size_t, std::size_t> from,
                        std::pair<std::size_t, std::size_t> to) {
  return rescale_box(BoxF::from(box), from, to);
}

Study bias_field_passthrough(Study study) { return study; }

Study median_filter_study(const Study& study) {
  Study out = study;
  for (std::size_t q = 0; q < kSequenceCount; ++q) {
    TensorF& vol = out.sequences[q];
    for (std::size_t s = 0; s < vol.dim(0); ++s) {
      const TensorF filtered = median_filter(vol.slab(s));
      std::copy(filtered.values().begin(), filtered.values().end(), vol.slab_values(s).begin());
    }
  }
  return out;
}

Study preprocess_native(const Study& study, const StandardizationStats& stats) {
  return standardize(median_filter_study(bias_field_passthrough(study)), stats);
}

TensorF network_input(const Study& preprocessed, std::size_t size) {
  const std::size_t slices = preprocessed.slices();
  TensorF out({slices, kSequenceCount, size, size});
  for (std::size_t s = 0; s < slices; ++s) {
    auto dst = out.slab_values(s);
    for (std::size_t q = 0; q < kSequenceCount; ++q) {
      const TensorF small = resize_bilinear(preprocessed.sequences[q].slab(s), size, size);
      std::copy(small.values().begin(), small.values().end(), dst.begin() + std::ptrdiff_t(q * size * size));
    }
  }
  return out;
}

}  // namespace cade::imaging
