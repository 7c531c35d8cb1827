#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace cade {

/// Axis-aligned rectangle in pixel units with a top-left origin.
struct BoundingBox {
  int x_ul = 0;
  int y_ul = 0;
  int width = 0;
  int height = 0;

  bool valid() const noexcept { return width > 0 && height > 0; }
  bool inside(std::size_t image_height, std::size_t image_width) const noexcept {
    return x_ul >= 0 && y_ul >= 0 && valid() &&
           static_cast<std::size_t>(x_ul + width) <= image_width &&
           static_cast<std::size_t>(y_ul + height) <= image_height;
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Real-valued box, as regressed by the detector before rounding.
struct BoxF {
  double x_ul = 0;
  double y_ul = 0;
  double width = 0;
  double height = 0;

  static BoxF from(const BoundingBox& b) { return {double(b.x_ul), double(b.y_ul), double(b.width), double(b.height)}; }
  friend bool operator==(const BoxF&, const BoxF&) = default;
};

/// Binary image, one byte per pixel holding 0 or 1.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }
  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Pixels covered by `box`, clipped to the image.
inline Mask rasterize_box(const BoundingBox& box, std::size_t height, std::size_t width) {
  Mask m(height, width);
  for (int y = std::max(0, box.y_ul); y < box.y_ul + box.height && y < int(height); ++y) {
    for (int x = std::max(0, box.x_ul); x < box.x_ul + box.width && x < int(width); ++x) {
      m.at(std::size_t(y), std::size_t(x)) = 1;
    }
  }
  return m;
}

}  // namespace cade
