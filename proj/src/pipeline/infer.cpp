#include <cmath>
#include <cstdio>

#include "cade/binary_io.hpp"
#include "cade/imaging/volume_io.hpp"
#include "cade/net/checkpoint.hpp"
#include "cade/pipeline/pipeline.hpp"
#include "csv.hpp"

namespace cade::pipeline {

using imaging::Study;

namespace {

constexpr std::size_t kInferenceBatch = 16;

TensorF forward_batched(const net::Network<float>& net, const TensorF& input) {
  const std::size_t n = input.dim(0);
  TensorF out({n, net.spec().outputs()});
  Dims d = input.dims();
  for (std::size_t b = 0; b < n; b += kInferenceBatch) {
    const std::size_t e = std::min(n, b + kInferenceBatch);
    d[0] = e - b;
    TensorF batch(d);
    for (std::size_t i = b; i < e; ++i) {
      auto src = input.slab_values(i);
      std::copy(src.begin(), src.end(), batch.slab_values(i - b).begin());
    }
    const TensorF y = net.forward(batch);
    std::copy(y.values().begin(), y.values().end(), out.values().begin() + std::ptrdiff_t(b * out.dim(1)));
  }
  return out;
}

std::string mask_file(const std::string& id, std::size_t slice) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%03zu.pgm", slice);
  return "masks/" + id + buf;
}

std::string num(double v) { return kv::format_number(v); }

template <typename T>
std::string opt(const std::optional<T>& v, double T::*field) {
  return v ? num((*v).*field) : std::string();
}

std::string opt_int(const std::optional<BoundingBox>& b, int BoundingBox::*field) {
  return b ? std::to_string((*b).*field) : std::string();
}

std::size_t to_size(const std::string& s, const char* what) {
  const double v = kv::parse_number(s, what);
  if (!(v >= 0) || v != std::floor(v)) throw FormatError(std::string(what) + " must be a non-negative integer");
  return std::size_t(v);
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(abnormal_threshold > 0.0 && abnormal_threshold < 1.0)) {
    throw ConfigError("abnormal_threshold must lie in (0, 1)");
  }
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
    throw ConfigError("decision_threshold must lie in (0, 1)");
  }
  if (growcut_max_iter == 0) throw ConfigError("growcut_max_iter must be at least 1");
}

bool study_is_abnormal(std::size_t flagged, std::size_t total, double threshold) {
  if (total == 0) return false;
  // flagged / total > threshold, compared without dividing
  return double(flagged) > threshold * double(total);
}

Classification classify_study(const net::Network<float>& ccnn, const TensorF& input, double decision_threshold,
                              double abnormal_threshold) {
  if (ccnn.spec().head != net::HeadKind::softmax) throw ConfigError("classifier checkpoint has no softmax head");
  const TensorF out = forward_batched(ccnn, input);
  Classification c;
  const std::size_t n = out.dim(0), k = out.dim(1);
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = out.at(i, k - 1);
    if (!std::isfinite(p)) throw NumericError("classifier produced a non-finite probability");
    c.probabilities.push_back(p);
    c.flagged.push_back(p > decision_threshold ? 1 : 0);
    flagged += std::size_t(c.flagged.back());
  }
  c.abnormal_fraction = n ? double(flagged) / double(n) : 0.0;
  c.abnormal = study_is_abnormal(flagged, n, abnormal_threshold);
  return c;
}

std::string to_string(BoxStatus s) {
  switch (s) {
    case BoxStatus::none: return "none";
    case BoxStatus::ok: return "ok";
    case BoxStatus::detection_failed: return "detection_failed";
  }
  return "none";
}

std::string to_string(MaskStatus s) {
  switch (s) {
    case MaskStatus::none: return "none";
    case MaskStatus::ok: return "ok";
    case MaskStatus::detection_failed: return "detection_failed";
    case MaskStatus::seeding_error: return "seeding_error";
  }
  return "none";
}

BoxStatus box_status_from_string(const std::string& s) {
  if (s == "none") return BoxStatus::none;
  if (s == "ok") return BoxStatus::ok;
  if (s == "detection_failed") return BoxStatus::detection_failed;
  throw FormatError("unknown box status '" + s + "'");
}

MaskStatus mask_status_from_string(const std::string& s) {
  if (s == "none") return MaskStatus::none;
  if (s == "ok") return MaskStatus::ok;
  if (s == "detection_failed") return MaskStatus::detection_failed;
  if (s == "seeding_error") return MaskStatus::seeding_error;
  throw FormatError("unknown mask status '" + s + "'");
}

std::optional<BoundingBox> to_native_box(const BoxF& raw, std::size_t size, std::size_t native_height,
                                         std::size_t native_width) {
  const bool finite = std::isfinite(raw.x_ul) && std::isfinite(raw.y_ul) && std::isfinite(raw.width) &&
                      std::isfinite(raw.height);
  if (!finite || raw.width <= 0.0 || raw.height <= 0.0) return std::nullopt;
  const BoundingBox b = imaging::rescale_box(raw, {size, size}, {native_height, native_width});
  if (!b.valid()) return std::nullopt;
  return b;
}

std::vector<Detection> detect_boxes(const net::Network<float>& dcnn, const TensorF& input,
                                    std::span<const std::size_t> slices, std::size_t native_height,
                                    std::size_t native_width) {
  if (dcnn.spec().head != net::HeadKind::linear || dcnn.spec().outputs() != 4) {
    throw ConfigError("detector checkpoint needs a linear 4-output head");
  }
  std::vector<Detection> out;
  if (slices.empty()) return out;
  Dims d = input.dims();
  d[0] = slices.size();
  TensorF picked(d);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (slices[i] >= input.dim(0)) throw ArgumentError("slice index out of range");
    auto src = input.slab_values(slices[i]);
    std::copy(src.begin(), src.end(), picked.slab_values(i).begin());
  }
  const TensorF y = forward_batched(dcnn, picked);
  const std::size_t size = input.dim(2);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    Detection det;
    det.slice = slices[i];
    det.raw = {y.at(i, 0), y.at(i, 1), y.at(i, 2), y.at(i, 3)};
    det.box = to_native_box(det.raw, size, native_height, native_width);
    out.push_back(det);
  }
  return out;
}

std::vector<SliceSegmentation> segment_study(const Study& study,
                                             std::span<const std::pair<std::size_t, std::optional<BoundingBox>>> boxes,
                                             imaging::Sequence sequence, std::size_t max_iter) {
  std::vector<SliceSegmentation> out;
  const TensorF& vol = study.sequence(sequence);
  for (const auto& [slice, box] : boxes) {
    SliceSegmentation seg;
    seg.slice = slice;
    if (!box) {
      seg.status = MaskStatus::detection_failed;
      out.push_back(std::move(seg));
      continue;
    }
    try {
      const seg::SeedSpec seeds = seg::generate_seeds(*box);
      const auto r = seg::growcut_run(imaging::volume_slice(vol, slice), seeds, {max_iter, 5.0});
      seg.status = MaskStatus::ok;
      seg.mask = r.mask;
      seg.iterations = r.iterations;
      seg.converged = r.converged;
    } catch (const SeedingError& e) {
      seg.status = MaskStatus::seeding_error;
      seg.message = e.what();
    } catch (const ArgumentError& e) {
      seg.status = MaskStatus::seeding_error;
      seg.message = e.what();
    }
    out.push_back(std::move(seg));
  }
  return out;
}

std::string format_slices(std::span<const SliceRecord> slices) {
  std::string out = std::string(kSlicesHeader) + "\n";
  for (const auto& r : slices) {
    out += r.patient_id + "," + std::to_string(r.slice) + "," + std::to_string(r.native_height) + "," +
           std::to_string(r.native_width) + "," + num(r.probability) + "," + std::to_string(r.predicted) + "," +
           (r.study_abnormal ? "1" : "0") + "," + to_string(r.box_status) + ",";
    out += opt(r.raw_box, &BoxF::x_ul) + "," + opt(r.raw_box, &BoxF::y_ul) + "," + opt(r.raw_box, &BoxF::width) +
           "," + opt(r.raw_box, &BoxF::height) + ",";
    out += opt_int(r.box, &BoundingBox::x_ul) + "," + opt_int(r.box, &BoundingBox::y_ul) + "," +
           opt_int(r.box, &BoundingBox::width) + "," + opt_int(r.box, &BoundingBox::height) + ",";
    out += to_string(r.mask_status) + "," + r.mask_path + "," + std::to_string(r.iterations) + "," +
           (r.converged ? "1" : "0") + "\n";
  }
  return out;
}

std::vector<SliceRecord> parse_slices(const std::string& text) {
  std::vector<SliceRecord> out;
  for (const auto& f : csv::read(text, kSlicesHeader, "slices.csv")) {
    SliceRecord r;
    r.patient_id = f[0];
    r.slice = to_size(f[1], "slice_idx");
    r.native_height = to_size(f[2], "native_height");
    r.native_width = to_size(f[3], "native_width");
    r.probability = kv::parse_number(f[4], "probability");
    r.predicted = int(to_size(f[5], "predicted"));
    r.study_abnormal = f[6] == "1";
    r.box_status = box_status_from_string(f[7]);
    if (!f[8].empty()) {
      r.raw_box = BoxF{kv::parse_number(f[8], "raw_x"), kv::parse_number(f[9], "raw_y"),
                       kv::parse_number(f[10], "raw_w"), kv::parse_number(f[11], "raw_h")};
    }
    if (!f[12].empty()) {
      r.box = BoundingBox{int(kv::parse_number(f[12], "x_ul")), int(kv::parse_number(f[13], "y_ul")),
                          int(kv::parse_number(f[14], "width")), int(kv::parse_number(f[15], "height"))};
    }
    r.mask_status = mask_status_from_string(f[16]);
    r.mask_path = f[17];
    r.iterations = to_size(f[18], "iterations");
    r.converged = f[19] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

struct LoadedNet {
  net::Network<float> network;
  imaging::StandardizationStats stats;
};

LoadedNet load_net(const fs::path& path, net::NetKind expected) {
  const net::Checkpoint ckpt = net::load_checkpoint(path);
  const net::NetworkSpec spec = net::spec_from_checkpoint(ckpt);
  if (spec.kind != expected) {
    throw ConfigError(path.string() + " holds a " + net::to_string(spec.kind) + " network, expected " +
                      net::to_string(expected));
  }
  return {net::network_from_checkpoint(spec, ckpt), stats_from_checkpoint(ckpt)};
}

void write_outputs(const CadeReport& report, const fs::path& out, const std::string& report_name) {
  kv::save(report.summary, out / report_name);
  const std::string s = format_slices(report.slices);
  io::write_file(out / "slices.csv", std::vector<std::uint8_t>(s.begin(), s.end()));
}

void record_segmentation(SliceRecord& rec, const SliceSegmentation& seg, const fs::path& out) {
  rec.mask_status = seg.status;
  if (seg.status == MaskStatus::ok) {
    rec.mask_path = mask_file(rec.patient_id, rec.slice);
    imaging::save_pgm(seg.mask, out / rec.mask_path);
    rec.iterations = seg.iterations;
    rec.converged = seg.converged;
  }
}

void count_masks(kv::Document& doc, std::span<const SliceRecord> slices) {
  long long masks = 0, seeding = 0, failed = 0, slow = 0;
  for (const auto& r : slices) {
    masks += r.mask_status == MaskStatus::ok;
    seeding += r.mask_status == MaskStatus::seeding_error;
    failed += r.mask_status == MaskStatus::detection_failed;
    slow += r.mask_status == MaskStatus::ok && !r.converged;
  }
  doc.set("masks", masks);
  doc.set("masks.detection_failed", failed);
  doc.set("masks.seeding_error", seeding);
  doc.set("masks.not_converged", slow);
}

}  // namespace

CadeReport run_pipeline(const PipelineConfig& config) {
  config.validate();
  const LoadedNet ccnn = load_net(config.ccnn_checkpoint, net::NetKind::ccnn);
  const LoadedNet dcnn = load_net(config.dcnn_checkpoint, net::NetKind::dcnn);
  const std::size_t size = ccnn.network.spec().input_dims[1];
  if (dcnn.network.spec().input_dims != ccnn.network.spec().input_dims) {
    throw ConfigError("classifier and detector disagree on the input size");
  }
  const auto ids = imaging::list_patients(config.volumes);
  if (ids.empty()) throw IoError("no studies found under " + config.volumes.string());
  fs::create_directories(config.output / "masks");

  CadeReport report;
  kv::Document& doc = report.summary;
  doc.set("run", std::string("infer"));
  doc.set("config.abnormal_threshold", config.abnormal_threshold);
  doc.set("config.decision_threshold", config.decision_threshold);
  doc.set("config.growcut_sequence", std::string(imaging::sequence_name(config.growcut_sequence)));
  doc.set("config.growcut_max_iter", static_cast<long long>(config.growcut_max_iter));
  doc.set("config.mae_variant", metrics::to_string(config.mae_variant));
  doc.set("config.deterministic", static_cast<long long>(config.deterministic));
  doc.set("config.seed", static_cast<long long>(config.seed));

  long long flagged_total = 0, detections = 0, rejected = 0, abnormal_patients = 0;
  for (const auto& id : ids) {
    const Study raw = imaging::load_study(config.volumes, id);
    raw.validate();
    const TensorF input = stack_slices(to_network_space(raw, ccnn.stats, size));
    const Classification cls = classify_study(ccnn.network, input, config.decision_threshold,
                                              config.abnormal_threshold);
    PatientRecord pr{id, raw.slices(), 0, cls.abnormal_fraction, cls.abnormal};
    const std::size_t first = report.slices.size();
    std::vector<std::size_t> flagged;
    for (std::size_t s = 0; s < raw.slices(); ++s) {
      SliceRecord rec;
      rec.patient_id = id;
      rec.slice = s;
      rec.native_height = raw.height();
      rec.native_width = raw.width();
      rec.probability = cls.probabilities[s];
      rec.predicted = cls.flagged[s];
      rec.study_abnormal = cls.abnormal;
      if (cls.flagged[s]) flagged.push_back(s);
      report.slices.push_back(rec);
    }
    pr.flagged = flagged.size();
    flagged_total += static_cast<long long>(flagged.size());
    if (cls.abnormal) {
      ++abnormal_patients;
      const TensorF det_input = stack_slices(to_network_space(raw, dcnn.stats, size));
      const auto dets = detect_boxes(dcnn.network, det_input, flagged, raw.height(), raw.width());
      const Study native = imaging::preprocess_native(raw, ccnn.stats);
      std::vector<std::pair<std::size_t, std::optional<BoundingBox>>> boxes;
      for (const auto& d : dets) {
        SliceRecord& rec = report.slices[first + d.slice];
        rec.raw_box = d.raw;
        rec.box = d.box;
        rec.box_status = d.box ? BoxStatus::ok : BoxStatus::detection_failed;
        ++detections;
        rejected += !d.box;
        boxes.emplace_back(d.slice, d.box);
      }
      for (const auto& seg : segment_study(native, boxes, config.growcut_sequence, config.growcut_max_iter)) {
        record_segmentation(report.slices[first + seg.slice], seg, config.output);
      }
    }
    report.patients.push_back(pr);
  }

  doc.set("patients", static_cast<long long>(ids.size()));
  doc.set("patients.abnormal", abnormal_patients);
  doc.set("slices", static_cast<long long>(report.slices.size()));
  doc.set("slices.flagged", flagged_total);
  doc.set("detections", detections);
  doc.set("detections.rejected", rejected);
  count_masks(doc, report.slices);
  for (const auto& p : report.patients) {
    doc.set("patient." + p.patient_id + ".slices", static_cast<long long>(p.slices));
    doc.set("patient." + p.patient_id + ".flagged", static_cast<long long>(p.flagged));
    doc.set("patient." + p.patient_id + ".abnormal_fraction", p.abnormal_fraction);
    doc.set("patient." + p.patient_id + ".verdict", std::string(p.abnormal ? "abnormal" : "normal"));
  }
  write_outputs(report, config.output, "report.txt");
  return report;
}

CadeReport run_segmentation(const fs::path& volumes, const fs::path& boxes_csv, const fs::path& output,
                            imaging::Sequence sequence, std::size_t max_iter) {
  if (max_iter == 0) throw ConfigError("growcut_max_iter must be at least 1");
  const imaging::GroundTruth boxes = imaging::load_ground_truth(boxes_csv);
  fs::create_directories(output / "masks");
  CadeReport report;
  report.summary.set("run", std::string("segment"));
  report.summary.set("config.growcut_sequence", std::string(imaging::sequence_name(sequence)));
  report.summary.set("config.growcut_max_iter", static_cast<long long>(max_iter));
  for (const auto& [id, truth] : boxes) {
    Study raw = imaging::load_study(volumes, id);
    raw.validate();
    const Study filtered = imaging::median_filter_study(imaging::bias_field_passthrough(std::move(raw)));
    std::vector<std::pair<std::size_t, std::optional<BoundingBox>>> wanted;
    for (const auto& s : truth.slices) {
      if (s.slice >= filtered.slices()) {
        throw AlignmentError("box for " + id + " slice " + std::to_string(s.slice) + " is beyond the volume");
      }
      if (s.box && !s.box->inside(filtered.height(), filtered.width())) {
        throw ValidationError("box for " + id + " slice " + std::to_string(s.slice) + " lies outside the image");
      }
      if (s.box) wanted.emplace_back(s.slice, s.box);
    }
    const auto segs = segment_study(filtered, wanted, sequence, max_iter);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      SliceRecord rec;
      rec.patient_id = id;
      rec.slice = segs[i].slice;
      rec.native_height = filtered.height();
      rec.native_width = filtered.width();
      rec.probability = 1.0;
      rec.predicted = 1;
      rec.study_abnormal = true;
      rec.box_status = BoxStatus::ok;
      rec.box = wanted[i].second;
      record_segmentation(rec, segs[i], output);
      report.slices.push_back(rec);
    }
  }
  report.summary.set("slices", static_cast<long long>(report.slices.size()));
  count_masks(report.summary, report.slices);
  write_outputs(report, output, "segment.txt");
  return report;
}

}  // namespace cade::pipeline
