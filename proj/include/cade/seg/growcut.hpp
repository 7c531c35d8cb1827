#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "cade/error.hpp"
#include "cade/geometry.hpp"
#include "cade/tensor.hpp"

namespace cade::seg {

/// Foreground and background seed circles derived from a box.
struct SeedSpec {
  double x_f = 0, y_f = 0, r_f = 0;
  double x_b = 0, y_b = 0, r_b = 0;
};

SeedSpec generate_seeds(const BoundingBox& box);

/// Pixel of a continuous coordinate (the pixel containing the point).
int pixel_of(double coordinate);
/// Circle radii in pixels, rounded half-up.
int radius_pixels(double radius);

/// Circumference pixels (x, y) of a midpoint-circle rasterization, unclipped,
/// each pixel listed once. r = 0 yields the centre alone.
std::vector<std::pair<int, int>> midpoint_circle(int cx, int cy, int r);

enum class CellLabel : std::uint8_t { unlabeled = 0, foreground = 1, background = 2 };

struct CellGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<CellLabel> label;
  std::vector<double> strength;
  std::vector<double> feature;

  CellGrid() = default;
  CellGrid(std::size_t h, std::size_t w)
      : height(h), width(w), label(h * w, CellLabel::unlabeled), strength(h * w, 0.0), feature(h * w, 0.0) {}

  std::size_t index(std::size_t y, std::size_t x) const { return y * width + x; }
  std::size_t count(CellLabel l) const;
  /// Range of the feature values, the normaliser of the attack weight.
  double feature_range() const;
  bool operator==(const CellGrid&) const = default;
};

/// Seeds both circumferences onto an h x w grid. Pixels outside the grid are
/// dropped; where the circles meet, foreground wins. Throws SeedingError when
/// no foreground seed lands inside the grid.
CellGrid rasterize_seeds(const SeedSpec& spec, std::size_t height, std::size_t width);

/// Same, with features copied from an H x W image.
CellGrid rasterize_seeds(const SeedSpec& spec, const TensorF& image);

/// One synchronous automaton update; returns the number of cells whose label
/// or strength changed.
std::size_t growcut_step(CellGrid& grid);

struct GrowCutOptions {
  std::size_t max_iter = 500;
  double roi_margin = 5.0;
};

struct GrowCutResult {
  Mask mask;                   // full image, 1 = foreground
  std::size_t iterations = 0;  // steps executed, including the final quiet one
  bool converged = false;
  std::size_t roi_x = 0, roi_y = 0, roi_width = 0, roi_height = 0;
};

/// Square region of interest of side 2 (r_b + margin) around the background
/// centre, clipped to the image: {x, y, width, height}.
BoundingBox growcut_roi(const SeedSpec& spec, std::size_t height, std::size_t width, double margin);

/// Runs the automaton inside the region of interest until no cell changes or
/// max_iter steps. Everything outside the region is background.
GrowCutResult growcut_run(const TensorF& image, const SeedSpec& seeds, const GrowCutOptions& options = {});

}  // namespace cade::seg
