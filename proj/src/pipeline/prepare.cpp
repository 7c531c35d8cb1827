#include <algorithm>

#include "cade/imaging/volume_io.hpp"
#include "cade/pipeline/pipeline.hpp"

namespace cade::pipeline {

using imaging::GroundTruth;
using imaging::PatientTruth;
using imaging::Study;

kv::Document stats_document(const imaging::StandardizationStats& stats) {
  kv::Document doc;
  for (const auto& [k, v] : stats.to_pairs()) doc.set(k, v);
  return doc;
}

imaging::StandardizationStats stats_from_document(const kv::Document& doc) {
  return imaging::StandardizationStats::from_lookup([&](const std::string& k) { return doc.number(k); });
}

imaging::StandardizationStats stats_from_checkpoint(const net::Checkpoint& ckpt) {
  return imaging::StandardizationStats::from_lookup([&](const std::string& k) { return ckpt.stat(k); });
}

Study to_network_space(const Study& raw, const imaging::StandardizationStats& stats, std::size_t size) {
  raw.validate();
  const Study pre = imaging::preprocess_native(raw, stats);
  Study out;
  out.patient_id = raw.patient_id;
  for (std::size_t q = 0; q < imaging::kSequenceCount; ++q) {
    const TensorF& vol = pre.sequences[q];
    TensorF small({vol.dim(0), size, size});
    for (std::size_t s = 0; s < vol.dim(0); ++s) {
      const TensorF r = imaging::resize_bilinear(vol.slab(s), size, size);
      std::copy(r.values().begin(), r.values().end(), small.slab_values(s).begin());
    }
    out.sequences[q] = std::move(small);
  }
  return out;
}

PatientTruth rescale_truth(const PatientTruth& truth, std::size_t native_height, std::size_t native_width,
                           std::size_t size) {
  PatientTruth out = truth;
  for (auto& s : out.slices) {
    if (s.box) s.box = imaging::rescale_box(*s.box, {native_height, native_width}, {size, size});
  }
  return out;
}

PreprocessSummary preprocess_directory(const fs::path& in, const fs::path& out, const std::optional<fs::path>& stats_file,
                                       std::size_t size) {
  const auto ids = imaging::list_patients(in);
  if (ids.empty()) throw IoError("no studies found under " + in.string());
  PreprocessSummary summary;
  summary.patients = ids.size();
  if (stats_file) {
    summary.stats = stats_from_document(kv::load(*stats_file));
  } else {
    std::vector<Study> all;
    all.reserve(ids.size());
    for (const auto& id : ids) {
      all.push_back(imaging::median_filter_study(imaging::bias_field_passthrough(imaging::load_study(in, id))));
    }
    summary.stats = imaging::compute_stats(all);
    summary.stats_computed = true;
  }
  fs::create_directories(out);
  std::optional<GroundTruth> truth;
  if (fs::exists(in / "ground_truth.csv")) truth = imaging::load_ground_truth(in / "ground_truth.csv");
  GroundTruth rescaled;
  for (const auto& id : ids) {
    const Study raw = imaging::load_study(in, id);
    imaging::save_study(to_network_space(raw, summary.stats, size), out);
    if (truth) {
      auto it = truth->find(id);
      if (it != truth->end()) rescaled[id] = rescale_truth(it->second, raw.height(), raw.width(), size);
    }
  }
  kv::Document doc = stats_document(summary.stats);
  doc.set("input.size", static_cast<long long>(size));
  doc.set("patients", static_cast<long long>(ids.size()));
  kv::save(doc, out / "stats.txt");
  if (truth) imaging::save_ground_truth(rescaled, out / "ground_truth.csv");
  return summary;
}

TensorF stack_slices(const Study& study) {
  study.validate();
  const std::size_t s = study.slices(), h = study.height(), w = study.width();
  TensorF out({s, imaging::kSequenceCount, h, w});
  for (std::size_t i = 0; i < s; ++i) {
    auto dst = out.slab_values(i);
    for (std::size_t q = 0; q < imaging::kSequenceCount; ++q) {
      auto src = study.sequences[q].slab_values(i);
      std::copy(src.begin(), src.end(), dst.begin() + std::ptrdiff_t(q * h * w));
    }
  }
  return out;
}

net::Dataset build_dataset(std::span<const Study> studies, const GroundTruth& truth, net::NetKind kind) {
  if (studies.empty()) throw ArgumentError("no studies to build a training set from");
  const bool detector = kind == net::NetKind::dcnn;
  struct Pick {
    std::size_t study, slice;
  };
  std::vector<Pick> picks;
  net::Dataset data;
  for (std::size_t i = 0; i < studies.size(); ++i) {
    const auto it = truth.find(studies[i].patient_id);
    if (it == truth.end()) throw AlignmentError("no ground truth for patient " + studies[i].patient_id);
    for (std::size_t s = 0; s < studies[i].slices(); ++s) {
      const auto* st = it->second.find(s);
      if (!st) {
        throw AlignmentError("no ground truth for patient " + studies[i].patient_id + " slice " + std::to_string(s));
      }
      if (detector) {
        if (!st->box) continue;
        data.boxes.push_back(BoxF::from(*st->box));
      } else {
        data.labels.push_back(st->box ? 1.0f : 0.0f);
      }
      picks.push_back({i, s});
    }
  }
  if (picks.empty()) throw ValidationError("training set has no usable slices");
  const Study& first = studies[picks.front().study];
  const std::size_t h = first.height(), w = first.width();
  data.images = TensorF({picks.size(), imaging::kSequenceCount, h, w});
  for (std::size_t n = 0; n < picks.size(); ++n) {
    const Study& st = studies[picks[n].study];
    if (st.height() != h || st.width() != w) throw ShapeError("studies differ in slice size");
    auto dst = data.images.slab_values(n);
    for (std::size_t q = 0; q < imaging::kSequenceCount; ++q) {
      auto src = st.sequences[q].slab_values(picks[n].slice);
      std::copy(src.begin(), src.end(), dst.begin() + std::ptrdiff_t(q * h * w));
    }
  }
  return data;
}

net::Dataset load_training_set(const fs::path& dir, net::NetKind kind) {
  const auto ids = imaging::list_patients(dir);
  if (ids.empty()) throw IoError("no studies found under " + dir.string());
  std::vector<Study> studies;
  for (const auto& id : ids) studies.push_back(imaging::load_study(dir, id));
  const GroundTruth truth = imaging::load_ground_truth(dir / "ground_truth.csv");
  net::Dataset data = build_dataset(studies, truth, kind);
  const kv::Document stats = kv::load(dir / "stats.txt");
  data.metadata = stats_from_document(stats).to_pairs();
  return data;
}

}  // namespace cade::pipeline
