#pragma once

#include <array>
#include <string>
#include <vector>

#include "cade/imaging/ground_truth.hpp"
#include "cade/rng.hpp"

namespace cade::imaging {

struct SynthConfig {
  std::size_t patients = 10;
  std::size_t slices = 12;
  std::size_t height = 128;
  std::size_t width = 128;
  double abnormal_fraction = 0.6;
  double noise_sd = 0.05;                 // per-sequence Gaussian noise, intensity units
  std::array<double, kSequenceCount> base{0.55, 0.60, 0.45, 0.50};           // brain tissue level
  std::array<double, kSequenceCount> contrast{-0.20, 0.35, 0.45, 0.40};      // tumor offset
  double min_radius = 8.0;   // in-plane tumor semi-axes, native pixels
  double max_radius = 18.0;
};

/// Generator parameters of one patient's tumor, kept for oracle checks.
struct TumorParams {
  bool present = false;
  double center_x = 0, center_y = 0;
  double radius_x = 0, radius_y = 0;  // semi-axes at the central slice
  double center_slice = 0;
  double half_extent = 0;             // slice radius of the ellipsoid
  std::size_t first_slice = 0, last_slice = 0;  // inclusive tumor-bearing range
};

struct SynthPatient {
  Study study;
  TumorParams tumor;
  TensorF mask;  // S x H x W, 1 inside the tumor
};

struct SynthDataset {
  std::vector<SynthPatient> patients;
  GroundTruth truth;
};

/// In-plane semi-axes of the ellipsoid cross-section at `slice` (0 outside).
std::pair<double, double> cross_section(const TumorParams& t, std::size_t slice);

/// Tumor mask of one slice: pixels whose centre lies inside the cross-section.
Mask tumor_slice_mask(const TumorParams& t, std::size_t slice, std::size_t height, std::size_t width);

/// Tight axis-aligned rectangle of a mask's non-zero pixels.
std::optional<BoundingBox> tight_box(const Mask& mask);

/// Smooth background with an elliptical head, per-sequence noise, and for
/// abnormal patients a truncated ellipsoidal tumor spanning a contiguous slice
/// range. Boxes are the tight rectangles of the per-slice masks.
SynthDataset synth_generate(const SynthConfig& config, Rng& rng);

/// Writes studies, masks (mask.miv), ground_truth.csv and generator.txt.
void save_synth_dataset(const SynthDataset& data, const std::filesystem::path& root);

}  // namespace cade::imaging
