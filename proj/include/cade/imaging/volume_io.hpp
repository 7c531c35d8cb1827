#pragma once

#include <filesystem>
#include <vector>

#include "cade/geometry.hpp"
#include "cade/tensor.hpp"

namespace cade::imaging {

/// MIV1 volume file, little-endian:
///   "MIV1" | u32 version (1) | u32 ndim | u32 dims[ndim] | f32 payload, row-major.
std::vector<std::uint8_t> encode_volume(const TensorF& volume);
TensorF decode_volume(const std::vector<std::uint8_t>& bytes);

void save_volume(const TensorF& volume, const std::filesystem::path& path);
TensorF load_volume(const std::filesystem::path& path);

/// Binary PGM ("P5", maxval 255). Masks are written as {0, 255}.
void save_pgm(const Mask& mask, const std::filesystem::path& path);
/// Linear map of [lo, hi] onto [0, 255], clamped.
void save_pgm(const TensorF& slice, double lo, double hi, const std::filesystem::path& path);
/// Reads a P5 file back as a mask (non-zero -> 1).
Mask load_pgm_mask(const std::filesystem::path& path);

}  // namespace cade::imaging
