#include "cade/seg/growcut.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cade::seg {

SeedSpec generate_seeds(const BoundingBox& box) {
  if (!box.valid()) {
    throw ArgumentError("seed box must have positive size, got " + std::to_string(box.width) + "x" +
                        std::to_string(box.height));
  }
  SeedSpec s;
  const double w = box.width, h = box.height;
  s.x_f = box.x_ul + w / 2;
  s.y_f = box.y_ul + h / 2;
  s.r_f = std::min(w, h) * 0.2;
  s.r_b = std::max(w, h) / 2;
  s.x_b = s.x_f;
  s.y_b = s.y_f;
  return s;
}

int pixel_of(double coordinate) { return static_cast<int>(std::floor(coordinate)); }

int radius_pixels(double radius) { return static_cast<int>(std::floor(radius + 0.5)); }

std::vector<std::pair<int, int>> midpoint_circle(int cx, int cy, int r) {
  if (r < 0) throw ArgumentError("circle radius must be non-negative");
  std::set<std::pair<int, int>> seen;
  std::vector<std::pair<int, int>> out;
  const auto put = [&](int x, int y) {
    if (seen.insert({x, y}).second) out.emplace_back(x, y);
  };
  int x = 0, y = r, p = 1 - r;
  while (x <= y) {
    put(cx + x, cy + y);
    put(cx - x, cy + y);
    put(cx + x, cy - y);
    put(cx - x, cy - y);
    put(cx + y, cy + x);
    put(cx - y, cy + x);
    put(cx + y, cy - x);
    put(cx - y, cy - x);
    ++x;
    if (p < 0) {
      p += 2 * x + 1;
    } else {
      --y;
      p += 2 * (x - y) + 1;
    }
  }
  return out;
}

std::size_t CellGrid::count(CellLabel l) const { return std::size_t(std::count(label.begin(), label.end(), l)); }

double CellGrid::feature_range() const {
  if (feature.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(feature.begin(), feature.end());
  return *hi - *lo;
}

CellGrid rasterize_seeds(const SeedSpec& spec, std::size_t height, std::size_t width) {
  if (!(spec.r_f >= 0.0 && spec.r_b >= spec.r_f)) throw ArgumentError("seed radii must satisfy 0 <= r_f <= r_b");
  CellGrid grid(height, width);
  const auto paint = [&](double cx, double cy, double r, CellLabel l) {
    for (auto [x, y] : midpoint_circle(pixel_of(cx), pixel_of(cy), radius_pixels(r))) {
      if (x < 0 || y < 0 || std::size_t(x) >= width || std::size_t(y) >= height) continue;
      const std::size_t i = grid.index(std::size_t(y), std::size_t(x));
      grid.label[i] = l;
      grid.strength[i] = 1.0;
    }
  };
  paint(spec.x_b, spec.y_b, spec.r_b, CellLabel::background);
  paint(spec.x_f, spec.y_f, spec.r_f, CellLabel::foreground);
  if (grid.count(CellLabel::foreground) == 0) throw SeedingError("foreground seed circle lies outside the image");
  return grid;
}

CellGrid rasterize_seeds(const SeedSpec& spec, const TensorF& image) {
  if (image.rank() != 2) throw ShapeError("segmentation expects an H x W image, got " + dims_string(image.dims()));
  CellGrid grid = rasterize_seeds(spec, image.dim(0), image.dim(1));
  std::copy(image.values().begin(), image.values().end(), grid.feature.begin());
  return grid;
}

std::size_t growcut_step(CellGrid& grid) {
  const double range = grid.feature_range();
  const double inv = range > 0.0 ? 1.0 / range : 0.0;
  const std::vector<CellLabel> label = grid.label;
  const std::vector<double> strength = grid.strength;
  const long h = long(grid.height), w = long(grid.width);
  std::size_t changed = 0;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      const std::size_t p = std::size_t(y * w + x);
      const double c = grid.feature[p];
      CellLabel winner = label[p];
      bool fired = false;
      double best_attack = -1.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const long yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
          const std::size_t q = std::size_t(yy * w + xx);
          if (label[q] == CellLabel::unlabeled) continue;
          const double attack = (1.0 - std::abs(c - grid.feature[q]) * inv) * strength[q];
          if (attack > strength[p] && attack >= best_attack) {
            best_attack = attack;
            winner = label[q];
            fired = true;
          }
        }
      }
      if (fired) {
        grid.label[p] = winner;
        grid.strength[p] = best_attack;
        ++changed;
      }
    }
  }
  return changed;
}

BoundingBox growcut_roi(const SeedSpec& spec, std::size_t height, std::size_t width, double margin) {
  const double half = spec.r_b + margin;
  const long x0 = std::clamp<long>(long(std::floor(spec.x_b - half)), 0, long(width));
  const long y0 = std::clamp<long>(long(std::floor(spec.y_b - half)), 0, long(height));
  const long x1 = std::clamp<long>(long(std::ceil(spec.x_b + half)), 0, long(width));
  const long y1 = std::clamp<long>(long(std::ceil(spec.y_b + half)), 0, long(height));
  return {int(x0), int(y0), int(x1 - x0), int(y1 - y0)};
}

GrowCutResult growcut_run(const TensorF& image, const SeedSpec& seeds, const GrowCutOptions& options) {
  if (image.rank() != 2) throw ShapeError("segmentation expects an H x W image, got " + dims_string(image.dims()));
  if (options.roi_margin < 0.0) throw ArgumentError("region margin must be non-negative");
  const std::size_t h = image.dim(0), w = image.dim(1);
  const BoundingBox roi = growcut_roi(seeds, h, w, options.roi_margin);
  if (!roi.valid()) throw SeedingError("seed circles lie outside the image");

  TensorF crop({std::size_t(roi.height), std::size_t(roi.width)});
  for (int y = 0; y < roi.height; ++y) {
    for (int x = 0; x < roi.width; ++x) crop.at(y, x) = image.at(std::size_t(roi.y_ul + y), std::size_t(roi.x_ul + x));
  }
  SeedSpec local = seeds;
  local.x_f -= roi.x_ul;
  local.x_b -= roi.x_ul;
  local.y_f -= roi.y_ul;
  local.y_b -= roi.y_ul;
  CellGrid grid = rasterize_seeds(local, crop);
  if (grid.count(CellLabel::background) == 0) throw SeedingError("no background seed lies inside the image");

  GrowCutResult result;
  while (result.iterations < options.max_iter) {
    ++result.iterations;
    if (growcut_step(grid) == 0) {
      result.converged = true;
      break;
    }
  }
  result.mask = Mask(h, w);
  for (int y = 0; y < roi.height; ++y) {
    for (int x = 0; x < roi.width; ++x) {
      if (grid.label[grid.index(std::size_t(y), std::size_t(x))] == CellLabel::foreground) {
        result.mask.at(std::size_t(roi.y_ul + y), std::size_t(roi.x_ul + x)) = 1;
      }
    }
  }
  result.roi_x = std::size_t(roi.x_ul);
  result.roi_y = std::size_t(roi.y_ul);
  result.roi_width = std::size_t(roi.width);
  result.roi_height = std::size_t(roi.height);
  return result;
}

}  // namespace cade::seg
