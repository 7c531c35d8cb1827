#include "cade/imaging/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "cade/binary_io.hpp"
#include "cade/imaging/volume_io.hpp"

namespace cade::imaging {

namespace {

// Ellipsoid slice radius chosen so the first and last tumor slices keep at
// least 60% of the central cross-section.
constexpr double kTruncation = 0.8;

std::string patient_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth_%03zu", i);
  return buf;
}

}  // namespace

std::pair<double, double> cross_section(const TumorParams& t, std::size_t slice) {
  if (!t.present || slice < t.first_slice || slice > t.last_slice) return {0.0, 0.0};
  const double d = (double(slice) - t.center_slice) / t.half_extent;
  const double scale = std::sqrt(std::max(0.0, 1.0 - d * d));
  return {t.radius_x * scale, t.radius_y * scale};
}

Mask tumor_slice_mask(const TumorParams& t, std::size_t slice, std::size_t height, std::size_t width) {
  Mask m(height, width);
  const auto [rx, ry] = cross_section(t, slice);
  if (rx <= 0.0 || ry <= 0.0) return m;
  for (std::size_t y = 0; y < height; ++y) {
    const double dy = (double(y) - t.center_y) / ry;
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = (double(x) - t.center_x) / rx;
      if (dx * dx + dy * dy <= 1.0) m.at(y, x) = 1;
    }
  }
  return m;
}

std::optional<BoundingBox> tight_box(const Mask& mask) {
  std::size_t x0 = mask.width, y0 = mask.height, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t y = 0; y < mask.height; ++y) {
    for (std::size_t x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      any = true;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (!any) return std::nullopt;
  return BoundingBox{int(x0), int(y0), int(x1 - x0 + 1), int(y1 - y0 + 1)};
}

SynthDataset synth_generate(const SynthConfig& cfg, Rng& rng) {
  if (cfg.patients == 0) throw ArgumentError("synth_generate needs at least one patient");
  if (cfg.slices == 0 || cfg.height < 16 || cfg.width < 16) throw ArgumentError("synthetic volumes are too small");
  if (!(cfg.min_radius > 0 && cfg.max_radius >= cfg.min_radius)) throw ArgumentError("bad tumor radius range");
  const double margin = cfg.max_radius + 2.0;
  if (2.0 * margin >= double(std::min(cfg.width, cfg.height))) throw ArgumentError("tumors do not fit the image");

  SynthDataset out;
  const double h = double(cfg.height), w = double(cfg.width);
  for (std::size_t p = 0; p < cfg.patients; ++p) {
    Rng prng = rng.split(p);
    SynthPatient patient;
    patient.study.patient_id = patient_name(p);

    // Head outline and low-frequency shading shared by all sequences.
    const double head_cx = w / 2 + prng.uniform(-0.03, 0.03) * w, head_cy = h / 2 + prng.uniform(-0.03, 0.03) * h;
    const double head_rx = w * prng.uniform(0.40, 0.46), head_ry = h * prng.uniform(0.42, 0.48);
    const double phase_x = prng.uniform(0, 2 * std::numbers::pi), phase_y = prng.uniform(0, 2 * std::numbers::pi);

    TumorParams& t = patient.tumor;
    t.present = prng.bernoulli(cfg.abnormal_fraction);
    if (t.present) {
      t.radius_x = prng.uniform(cfg.min_radius, cfg.max_radius);
      t.radius_y = prng.uniform(cfg.min_radius, cfg.max_radius);
      // Keep the tumor inside the head ellipse.
      const double reach_x = std::max(0.0, head_rx - t.radius_x - 4.0) / std::sqrt(2.0);
      const double reach_y = std::max(0.0, head_ry - t.radius_y - 4.0) / std::sqrt(2.0);
      t.center_x = std::clamp(head_cx + prng.uniform(-reach_x, reach_x), margin, w - 1 - margin);
      t.center_y = std::clamp(head_cy + prng.uniform(-reach_y, reach_y), margin, h - 1 - margin);
      const std::size_t max_len = std::max<std::size_t>(1, cfg.slices * 2 / 3);
      const std::size_t min_len = std::max<std::size_t>(1, std::min(max_len, cfg.slices / 3));
      const std::size_t len = min_len + prng.below(max_len - min_len + 1);
      t.first_slice = prng.below(cfg.slices - len + 1);
      t.last_slice = t.first_slice + len - 1;
      t.center_slice = 0.5 * double(t.first_slice + t.last_slice);
      t.half_extent = (0.5 * double(len - 1) + 0.5) / kTruncation;
    }

    const Dims dims{cfg.slices, cfg.height, cfg.width};
    patient.mask = TensorF(dims);
    for (auto& v : patient.study.sequences) v = TensorF(dims);
    PatientTruth truth;
    truth.patient_id = patient.study.patient_id;

    for (std::size_t s = 0; s < cfg.slices; ++s) {
      const Mask tumor = tumor_slice_mask(t, s, cfg.height, cfg.width);
      for (std::size_t y = 0; y < cfg.height; ++y) {
        for (std::size_t x = 0; x < cfg.width; ++x) {
          const double dx = (double(x) - head_cx) / head_rx, dy = (double(y) - head_cy) / head_ry;
          const bool in_head = dx * dx + dy * dy <= 1.0;
          const double shade = 0.03 * std::sin(2 * std::numbers::pi * double(x) / w + phase_x) *
                               std::cos(2 * std::numbers::pi * double(y) / h + phase_y);
          const bool in_tumor = tumor.at(y, x) != 0;
          patient.mask.at(s, y, x) = in_tumor ? 1.0f : 0.0f;
          for (std::size_t q = 0; q < kSequenceCount; ++q) {
            double v = in_head ? cfg.base[q] + shade : 0.05 * cfg.base[q];
            if (in_tumor) v += cfg.contrast[q];
            v += prng.normal(0.0, cfg.noise_sd);
            patient.study.sequences[q].at(s, y, x) = static_cast<float>(v);
          }
        }
      }
      SliceTruth st;
      st.slice = s;
      if (auto box = tight_box(tumor)) {
        st.label = SliceLabel::abnormal;
        st.box = box;
      }
      truth.slices.push_back(st);
    }
    out.truth[truth.patient_id] = std::move(truth);
    out.patients.push_back(std::move(patient));
  }
  return out;
}

void save_synth_dataset(const SynthDataset& data, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  std::ostringstream gen;
  gen.precision(17);
  for (const auto& p : data.patients) {
    save_study(p.study, root);
    save_volume(p.mask, root / p.study.patient_id / "mask.miv");
    const auto& t = p.tumor;
    const std::string k = p.study.patient_id + ".";
    gen << k << "present=" << (t.present ? 1 : 0) << "\n";
    if (t.present) {
      gen << k << "center_x=" << t.center_x << "\n" << k << "center_y=" << t.center_y << "\n";
      gen << k << "radius_x=" << t.radius_x << "\n" << k << "radius_y=" << t.radius_y << "\n";
      gen << k << "center_slice=" << t.center_slice << "\n" << k << "half_extent=" << t.half_extent << "\n";
      gen << k << "first_slice=" << t.first_slice << "\n" << k << "last_slice=" << t.last_slice << "\n";
    }
  }
  const std::string g = gen.str();
  io::write_file(root / "generator.txt", std::vector<std::uint8_t>(g.begin(), g.end()));
  save_ground_truth(data.truth, root / "ground_truth.csv");
}

}  // namespace cade::imaging
