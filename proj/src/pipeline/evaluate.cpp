#include <cmath>
#include <map>

#include "cade/binary_io.hpp"
#include "cade/imaging/volume_io.hpp"
#include "cade/pipeline/pipeline.hpp"
#include "csv.hpp"

namespace cade::pipeline {

namespace {

std::string num(double v) { return kv::format_number(v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

void put_score(kv::Document& doc, const std::string& key, const metrics::Score& s) {
  doc.set(key, s.value);
  doc.set(key + ".degenerate", static_cast<long long>(s.degenerate));
}

void put_mae(kv::Document& doc, const std::string& key, std::span<const BoxF> f, std::span<const BoxF> y) {
  for (auto v : {metrics::MaeVariant::literal, metrics::MaeVariant::per_coordinate}) {
    const auto r = metrics::box_mae(f, y, v);
    doc.set(key + "." + metrics::to_string(v), r.mae);
    doc.set(key + "." + metrics::to_string(v) + ".sd", r.sd);
  }
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / double(v.size());
}

std::optional<double> slice_abs_err(const EvalSlice& s, bool literal) {
  if (!s.raw_box || !s.truth_box_input) return std::nullopt;
  const BoxF t = BoxF::from(*s.truth_box_input);
  const double e = std::abs(s.raw_box->x_ul - t.x_ul) + std::abs(s.raw_box->y_ul - t.y_ul) +
                   std::abs(s.raw_box->width - t.width) + std::abs(s.raw_box->height - t.height);
  return literal ? e : e / 4.0;
}

std::optional<double> slice_box_dsc(const EvalSlice& s) {
  if (!s.box || !s.truth_box) return std::nullopt;
  return metrics::box_dsc(*s.box, *s.truth_box, s.native_height, s.native_width).value;
}

}  // namespace

kv::Document summarize(std::span<const EvalSlice> slices, metrics::MaeVariant headline,
                       const std::string& sequence_name) {
  kv::Document doc;
  std::vector<int> pred, truth;
  std::vector<double> scores;
  for (const auto& s : slices) {
    pred.push_back(s.predicted);
    truth.push_back(s.truth);
    scores.push_back(s.probability);
  }
  const auto c = metrics::ConfusionCounts::tally(pred, truth);
  doc.set("slices", static_cast<long long>(slices.size()));
  doc.set("positives", static_cast<long long>(c.positives()));
  doc.set("negatives", static_cast<long long>(c.negatives()));
  doc.set("tp", static_cast<long long>(c.tp));
  doc.set("tn", static_cast<long long>(c.tn));
  doc.set("fp", static_cast<long long>(c.fp));
  doc.set("fn", static_cast<long long>(c.fn));
  put_score(doc, "accuracy", metrics::accuracy(c));
  put_score(doc, "precision", metrics::precision(c));
  put_score(doc, "recall", metrics::recall(c));
  put_score(doc, "f1", metrics::f_beta(c, 1.0));
  if (c.positives() > 0 && c.negatives() > 0) {
    doc.set("auc", metrics::auc(scores, truth));
    doc.set("auc.degenerate", 0LL);
  } else {
    doc.set("auc", std::nan(""));
    doc.set("auc.degenerate", 1LL);
  }

  // Detector accuracy on slices that are truly abnormal and received a box.
  std::vector<BoxF> f_in, y_in, f_nat, y_nat;
  std::vector<double> box_dscs;
  for (const auto& s : slices) {
    if (!s.raw_box || !s.truth_box || !s.truth_box_input) continue;
    f_in.push_back(*s.raw_box);
    y_in.push_back(BoxF::from(*s.truth_box_input));
    if (s.box) {
      f_nat.push_back(BoxF::from(*s.box));
      y_nat.push_back(BoxF::from(*s.truth_box));
      box_dscs.push_back(*slice_box_dsc(s));
    }
  }
  doc.set("box.count", static_cast<long long>(f_in.size()));
  doc.set("box.mae_variant", metrics::to_string(headline));
  if (!f_in.empty()) {
    put_mae(doc, "box.mae_input", f_in, y_in);
    doc.set("box.mae", metrics::box_mae(f_in, y_in, headline).mae);
  } else {
    doc.set("box.mae", std::nan(""));
  }
  if (!f_nat.empty()) put_mae(doc, "box.mae_native", f_nat, y_nat);
  doc.set("box.dsc", mean(box_dscs));

  std::vector<double> seg, seg_all;
  for (const auto& s : slices) {
    if (s.seg_dsc) seg.push_back(*s.seg_dsc);
    if (s.seg_dsc_all) seg_all.push_back(*s.seg_dsc_all);
  }
  doc.set("seg.sequence", sequence_name);
  doc.set("seg.count", static_cast<long long>(seg.size()));
  doc.set("seg.dsc." + sequence_name, mean(seg));
  doc.set("seg.count_all", static_cast<long long>(seg_all.size()));
  doc.set("seg.dsc_all." + sequence_name, mean(seg_all));
  return doc;
}

Evaluation evaluate_run(const fs::path& run_dir, const imaging::GroundTruth& truth,
                        const std::optional<fs::path>& masks_dir, metrics::MaeVariant headline) {
  const auto bytes = io::read_file(run_dir / "slices.csv");
  const auto records = parse_slices(std::string(bytes.begin(), bytes.end()));
  std::string sequence = "T2";
  for (const char* name : {"report.txt", "segment.txt"}) {
    if (fs::exists(run_dir / name)) {
      if (auto s = kv::load(run_dir / name).get("config.growcut_sequence")) sequence = *s;
    }
  }

  std::vector<std::string> offenders;
  std::map<std::pair<std::string, std::size_t>, bool> seen;
  for (const auto& r : records) {
    const auto it = truth.find(r.patient_id);
    if (it == truth.end() || !it->second.find(r.slice)) offenders.push_back(r.patient_id + ":" + std::to_string(r.slice));
    seen[{r.patient_id, r.slice}] = true;
  }
  for (const auto& [id, p] : truth) {
    for (const auto& s : p.slices) {
      if (!seen.count({id, s.slice})) offenders.push_back(id + ":" + std::to_string(s.slice) + " (missing from run)");
    }
  }
  if (!offenders.empty()) {
    std::string list;
    for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) list += (i ? ", " : "") + offenders[i];
    if (offenders.size() > 10) list += ", ... (" + std::to_string(offenders.size()) + " in total)";
    throw AlignmentError("run and ground truth disagree on slices: " + list);
  }

  Evaluation eval;
  std::map<std::string, TensorF> reference;
  for (const auto& r : records) {
    const imaging::SliceTruth* st = truth.at(r.patient_id).find(r.slice);
    EvalSlice e;
    e.patient_id = r.patient_id;
    e.slice = r.slice;
    e.truth = st->box ? 1 : 0;
    e.probability = r.probability;
    e.predicted = r.predicted;
    e.raw_box = r.raw_box;
    e.box = r.box;
    e.native_height = r.native_height;
    e.native_width = r.native_width;
    if (st->box) {
      e.truth_box = st->box;
      e.truth_box_input = imaging::rescale_box(*st->box, {r.native_height, r.native_width}, {kInputSize, kInputSize});
    }
    if (masks_dir) {
      auto ref = reference.find(r.patient_id);
      if (ref == reference.end()) {
        ref = reference.emplace(r.patient_id, imaging::load_volume(*masks_dir / r.patient_id / "mask.miv")).first;
      }
      const TensorF& vol = ref->second;
      if (vol.rank() != 3 || vol.dim(0) <= r.slice || vol.dim(1) != r.native_height || vol.dim(2) != r.native_width) {
        throw AlignmentError("reference mask of " + r.patient_id + " does not match the study dims");
      }
      Mask gt(r.native_height, r.native_width);
      auto src = vol.slab_values(r.slice);
      for (std::size_t i = 0; i < gt.data.size(); ++i) gt.data[i] = src[i] > 0.5f;
      Mask produced(r.native_height, r.native_width);
      if (r.mask_status == MaskStatus::ok) {
        produced = imaging::load_pgm_mask(run_dir / r.mask_path);
        if (produced.height != gt.height || produced.width != gt.width) {
          throw FormatError(r.mask_path + " does not match the study dims");
        }
        e.seg_dsc = metrics::dsc(produced, gt).value;
      }
      if (gt.count() > 0 || produced.count() > 0) e.seg_dsc_all = metrics::dsc(produced, gt).value;
    }
    eval.slices.push_back(std::move(e));
  }
  eval.summary = summarize(eval.slices, headline, sequence);
  return eval;
}

std::string format_eval_slices(std::span<const EvalSlice> slices) {
  std::string out = std::string(kEvalHeader) + "\n";
  for (const auto& s : slices) {
    out += s.patient_id + "," + std::to_string(s.slice) + "," + std::to_string(s.truth) + "," + num(s.probability) +
           "," + std::to_string(s.predicted) + "," + (s.predicted == s.truth ? "1" : "0") + "," +
           num(std::abs(s.probability - double(s.truth))) + "," + opt_num(slice_abs_err(s, false)) + "," +
           opt_num(slice_abs_err(s, true)) + "," + opt_num(slice_box_dsc(s)) + "," + opt_num(s.seg_dsc) + "," +
           opt_num(s.seg_dsc_all) + "\n";
  }
  return out;
}

void write_evaluation(const Evaluation& eval, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  kv::save(eval.summary, out_dir / "eval.txt");
  const std::string s = format_eval_slices(eval.slices);
  io::write_file(out_dir / "eval_slices.csv", std::vector<std::uint8_t>(s.begin(), s.end()));
}

metrics::TTestResult compare_runs(const fs::path& eval_a, const fs::path& eval_b, const std::string& metric) {
  const auto header = csv::split(kEvalHeader);
  const auto col = std::find(header.begin(), header.end(), metric);
  if (col == header.end() || col - header.begin() < 2) {
    throw ConfigError("unknown comparison metric '" + metric + "'");
  }
  const std::size_t c = std::size_t(col - header.begin());
  const auto load = [&](const fs::path& p) {
    const fs::path file = fs::is_directory(p) ? p / "eval_slices.csv" : p;
    const auto bytes = io::read_file(file);
    std::map<std::pair<std::string, std::size_t>, double> values;
    for (const auto& f : csv::read(std::string(bytes.begin(), bytes.end()), kEvalHeader, file.string())) {
      if (f[c].empty()) continue;
      values[{f[0], std::size_t(kv::parse_number(f[1], "slice_idx"))}] = kv::parse_number(f[c], metric);
    }
    return values;
  };
  const auto a = load(eval_a), b = load(eval_b);
  std::vector<double> va, vb;
  for (const auto& [key, v] : a) {
    auto it = b.find(key);
    if (it == b.end()) continue;
    va.push_back(v);
    vb.push_back(it->second);
  }
  if (va.size() < 2) throw AlignmentError("fewer than two slices carry '" + metric + "' in both evaluations");
  return metrics::paired_t_test(va, vb);
}

}  // namespace cade::pipeline
