#include "doctest.h"

#include <filesystem>

#include "cade/binary_io.hpp"
#include "cade/imaging/synth.hpp"
#include "cade/imaging/volume_io.hpp"
#include "cade/kv.hpp"
#include "cade/net/checkpoint.hpp"
#include "cade/pipeline/pipeline.hpp"
#include "../support/oracles.hpp"

using namespace cade;
using namespace cade::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cade_unit_pipeline_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  const auto b = io::read_file(p);
  return std::string(b.begin(), b.end());
}

// Untrained networks with the synthetic set's statistics attached.
void write_random_checkpoints(const fs::path& dir, const imaging::StandardizationStats& stats) {
  Rng rng(21);
  for (auto kind : {net::NetKind::ccnn, net::NetKind::dcnn}) {
    const auto spec = kind == net::NetKind::ccnn ? net::build_ccnn() : net::build_dcnn();
    auto ckpt = net::to_checkpoint(net::Network<float>::initialize(spec, rng));
    net::record_architecture(ckpt, kind, {});
    for (const auto& [k, v] : stats.to_pairs()) ckpt.set_stat(k, v);
    net::save_checkpoint(ckpt, dir / (net::to_string(kind) + ".ckpt"));
  }
}

EvalSlice eval_slice(const std::string& id, std::size_t s, int truth, double p, int pred) {
  EvalSlice e;
  e.patient_id = id;
  e.slice = s;
  e.truth = truth;
  e.probability = p;
  e.predicted = pred;
  e.native_height = e.native_width = 240;
  return e;
}

}  // namespace

TEST_CASE("patient rule is a strict five percent") {
  CHECK(study_is_abnormal(8, 155, 0.05));
  CHECK_FALSE(study_is_abnormal(0, 155, 0.05));
  CHECK_FALSE(study_is_abnormal(5, 100, 0.05));
  CHECK(study_is_abnormal(6, 100, 0.05));
  CHECK_FALSE(study_is_abnormal(7, 155, 0.05));
  CHECK_FALSE(study_is_abnormal(0, 0, 0.05));
  PipelineConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.abnormal_threshold = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.abnormal_threshold = 0.05;
  cfg.decision_threshold = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("regressed boxes move to native pixels or are rejected") {
  CHECK(*to_native_box({10.2, 20.7, 40.1, 29.8}, 96, 240, 240) == BoundingBox{26, 52, 100, 75});
  CHECK_FALSE(to_native_box({10, 10, 0.0, 5}, 96, 240, 240));
  CHECK_FALSE(to_native_box({10, 10, 5, -2}, 96, 240, 240));
  CHECK_FALSE(to_native_box({std::nan(""), 10, 5, 5}, 96, 240, 240));
  const auto clamped = to_native_box({90, 90, 20, 20}, 96, 240, 240);
  REQUIRE(clamped);
  CHECK(clamped->inside(240, 240));
  const auto off = to_native_box({200, 10, 5, 5}, 96, 240, 240);
  REQUIRE(off);
  CHECK(off->inside(240, 240));
}

TEST_CASE("classification with symmetric logits flags nothing") {
  const auto spec = net::build_ccnn();
  std::vector<TensorF> zeros;
  for (const auto& p : net::parameter_layout(spec)) zeros.emplace_back(p.dims, 0.0f);
  const net::Network<float> ccnn(spec, zeros);
  const auto c = classify_study(ccnn, TensorF({3, 4, 96, 96}, 0.3f), 0.5, 0.05);
  CHECK(c.probabilities == std::vector<double>{0.5, 0.5, 0.5});
  CHECK(c.flagged == std::vector<int>{0, 0, 0});
  CHECK_FALSE(c.abnormal);
  const auto low = classify_study(ccnn, TensorF({3, 4, 96, 96}, 0.3f), 0.4, 0.05);
  CHECK(low.abnormal);
  CHECK(low.abnormal_fraction == 1.0);
}

TEST_CASE("segmentation accounting per slice") {
  imaging::SynthConfig cfg;
  cfg.patients = 1;
  cfg.abnormal_fraction = 1.0;
  cfg.slices = 6;
  Rng rng(3);
  const auto data = imaging::synth_generate(cfg, rng);
  const auto& p = data.patients[0];
  const auto& truth = data.truth.at(p.study.patient_id);
  std::vector<std::pair<std::size_t, std::optional<BoundingBox>>> boxes;
  std::size_t with_box = 0;
  for (const auto& s : truth.slices) {
    boxes.emplace_back(s.slice, s.box);
    with_box += s.box.has_value();
  }
  boxes.emplace_back(0, BoundingBox{500, 500, 10, 10});  // circles entirely off the image
  const auto filtered = imaging::median_filter_study(p.study);
  const auto segs = segment_study(filtered, boxes, imaging::Sequence::T2, 500);
  REQUIRE(segs.size() == boxes.size());
  std::size_t ok = 0, failed = 0, seeding = 0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto st = segs[i].status;
    ok += st == MaskStatus::ok;
    failed += st == MaskStatus::detection_failed;
    seeding += st == MaskStatus::seeding_error;
    CHECK(st != MaskStatus::none);
    CHECK(segs[i].slice == boxes[i].first);
    if (st == MaskStatus::ok) {
      Mask tumor = imaging::tumor_slice_mask(p.tumor, segs[i].slice, cfg.height, cfg.width);
      std::size_t inter = 0;
      for (std::size_t k = 0; k < tumor.data.size(); ++k) inter += tumor.data[k] && segs[i].mask.data[k];
      CHECK(2.0 * double(inter) / double(tumor.count() + segs[i].mask.count()) > 0.6);
    }
  }
  CHECK(ok == with_box);
  CHECK(failed == cfg.slices - with_box);
  CHECK(seeding == 1);
  CHECK(ok + failed + seeding == boxes.size());
}

TEST_CASE("slices CSV round trip") {
  SliceRecord a;
  a.patient_id = "p1";
  a.slice = 3;
  a.native_height = 128;
  a.native_width = 120;
  a.probability = 0.123456789012345;
  a.predicted = 1;
  a.study_abnormal = true;
  a.box_status = BoxStatus::ok;
  a.raw_box = BoxF{1.5, 2.25, 30.125, 40};
  a.box = BoundingBox{2, 3, 38, 53};
  a.mask_status = MaskStatus::ok;
  a.mask_path = "masks/p1_003.pgm";
  a.iterations = 17;
  a.converged = true;
  SliceRecord b;
  b.patient_id = "p2";
  b.slice = 0;
  b.native_height = b.native_width = 64;
  b.probability = 0.01;
  const std::vector<SliceRecord> recs{a, b};
  const std::string text = format_slices(recs);
  CHECK(text.rfind(std::string(kSlicesHeader) + "\n", 0) == 0);
  const auto back = parse_slices(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].probability == a.probability);
  CHECK(*back[0].raw_box == *a.raw_box);
  CHECK(*back[0].box == *a.box);
  CHECK(back[0].mask_path == a.mask_path);
  CHECK(back[0].iterations == 17);
  CHECK_FALSE(back[1].box);
  CHECK(back[1].mask_status == MaskStatus::none);
  CHECK(format_slices(back) == text);
  CHECK_THROWS_AS(parse_slices("bad header\n"), ParseError);
  CHECK(mask_status_from_string("seeding_error") == MaskStatus::seeding_error);
  CHECK(box_status_from_string(to_string(BoxStatus::detection_failed)) == BoxStatus::detection_failed);
}

TEST_CASE("summary of the ten-sample confusion fixture") {
  std::vector<EvalSlice> slices;
  for (std::size_t i = 0; i < 10; ++i) {
    const int t = testing::kFixtureTruth[i], p = testing::kFixturePredicted[i];
    slices.push_back(eval_slice("p", i, t, p ? 0.9 - 0.01 * double(i) : 0.1 + 0.01 * double(i), p));
  }
  const auto doc = summarize(slices, metrics::MaeVariant::per_coordinate, "T2");
  CHECK(*doc.number("accuracy") == doctest::Approx(testing::kFixtureAccuracy));
  CHECK(*doc.number("precision") == doctest::Approx(testing::kFixturePrecision));
  CHECK(*doc.number("recall") == doctest::Approx(testing::kFixtureRecall));
  CHECK(*doc.number("f1") == doctest::Approx(testing::kFixtureF1));
  CHECK(*doc.number("tp") == 3);
  CHECK(*doc.number("fp") == 1);
  std::vector<double> s;
  for (const auto& e : slices) s.push_back(e.probability);
  CHECK(*doc.number("auc") == doctest::Approx(testing::trapezoid_auc(s, testing::kFixtureTruth)).epsilon(1e-12));
}

TEST_CASE("summary of a perfect predictor") {
  std::vector<EvalSlice> slices;
  for (std::size_t i = 0; i < 6; ++i) {
    auto e = eval_slice("p", i, int(i % 2), i % 2 ? 0.9 : 0.1, int(i % 2));
    if (i % 2) {
      e.truth_box = e.box = BoundingBox{10, 20, 30, 40};
      e.truth_box_input = BoundingBox{4, 8, 12, 16};
      e.raw_box = BoxF{4, 8, 12, 16};
      e.seg_dsc = e.seg_dsc_all = 1.0;
    }
    slices.push_back(e);
  }
  const auto doc = summarize(slices, metrics::MaeVariant::per_coordinate, "T2");
  CHECK(*doc.number("accuracy") == 1.0);
  CHECK(*doc.number("auc") == 1.0);
  CHECK(*doc.number("box.dsc") == 1.0);
  CHECK(*doc.number("box.mae") == 0.0);
  CHECK(*doc.number("box.count") == 3);
  CHECK(doc.get("box.mae_variant") == "per_coordinate");
  CHECK(*doc.number("seg.dsc.T2") == 1.0);
}

TEST_CASE("key=value documents") {
  const auto d = kv::parse("# comment\n\na=1\nb = hello world \nc=2.5\n");
  CHECK(d.get("a") == "1");
  CHECK(d.get("b") == "hello world");
  CHECK(*d.number("c") == 2.5);
  CHECK_FALSE(d.get("z"));
  CHECK_THROWS_AS(d.require("z"), FormatError);
  CHECK_THROWS_AS(d.number("b"), FormatError);
  CHECK_THROWS_AS(kv::parse("a=1\na=2\n"), ParseError);
  CHECK_THROWS_AS(kv::parse("=1\n"), ParseError);
  try {
    kv::parse("a=1\nnovalue\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  kv::Document doc;
  doc.set("x", 0.1);
  doc.set("n", 42LL);
  doc.set("s", std::string("text"));
  doc.set("x", 0.2);
  CHECK(kv::format(doc) == "x=0.2\nn=42\ns=text\n");
  CHECK(kv::parse(kv::format(doc)).entries == doc.entries);
  Rng rng(5);
  for (int t = 0; t < 1000; ++t) {
    const double v = rng.normal(0, 1e6) * std::pow(10.0, double(rng.below(30)) - 15);
    CHECK(kv::parse_number(kv::format_number(v), "v") == v);
  }
  CHECK(kv::format_number(0.1) == "0.1");
  CHECK(kv::format_number(std::nan("")) == "nan");
  CHECK(std::isinf(kv::parse_number(kv::format_number(-INFINITY), "v")));
  CHECK_THROWS_AS(kv::parse_number("1.5x", "v"), FormatError);
  CHECK_THROWS_AS(kv::parse_number("", "v"), FormatError);
}

TEST_CASE("small end-to-end run: accounting, determinism, evaluation and comparison") {
  const fs::path root = scratch("e2e");
  imaging::SynthConfig cfg;
  cfg.patients = 3;
  cfg.slices = 4;
  cfg.height = cfg.width = 64;
  cfg.min_radius = 5;
  cfg.max_radius = 9;
  cfg.abnormal_fraction = 0.7;
  Rng rng(9);
  const auto data = imaging::synth_generate(cfg, rng);
  imaging::save_synth_dataset(data, root / "data");
  const auto pre = preprocess_directory(root / "data", root / "pre", std::nullopt);
  CHECK(pre.stats_computed);
  CHECK(pre.patients == 3);
  CHECK(fs::exists(root / "pre" / "stats.txt"));
  const auto ds = load_training_set(root / "pre", net::NetKind::dcnn);
  for (const auto& b : ds.boxes) CHECK(b.width > 0);
  CHECK(load_training_set(root / "pre", net::NetKind::ccnn).size() == 12);
  write_random_checkpoints(root, pre.stats);

  PipelineConfig pc;
  pc.volumes = root / "data";
  pc.ccnn_checkpoint = root / "ccnn.ckpt";
  pc.dcnn_checkpoint = root / "dcnn.ckpt";
  pc.decision_threshold = 1e-6;  // flag everything so every stage runs
  pc.output = root / "run_a";
  const CadeReport a = run_pipeline(pc);
  pc.output = root / "run_b";
  run_pipeline(pc);
  CHECK(slurp(root / "run_a" / "report.txt") == slurp(root / "run_b" / "report.txt"));
  CHECK(slurp(root / "run_a" / "slices.csv") == slurp(root / "run_b" / "slices.csv"));
  std::size_t pgms = 0;
  for (const auto& e : fs::directory_iterator(root / "run_a" / "masks")) {
    ++pgms;
    CHECK(slurp(e.path()) == slurp(root / "run_b" / "masks" / e.path().filename()));
  }

  std::size_t masks = 0;
  for (const auto& s : a.slices) {
    const bool downstream = s.box_status != BoxStatus::none || s.mask_status != MaskStatus::none;
    if (!s.study_abnormal || !s.predicted) CHECK_FALSE(downstream);
    if (s.study_abnormal && s.predicted) {
      CHECK(s.box_status != BoxStatus::none);
      CHECK(s.mask_status != MaskStatus::none);
      CHECK((s.mask_status == MaskStatus::detection_failed) == (s.box_status == BoxStatus::detection_failed));
    }
    masks += s.mask_status == MaskStatus::ok;
  }
  CHECK(pgms == masks);
  CHECK(*a.summary.number("masks") == double(masks));

  const auto ev = evaluate_run(root / "run_a", data.truth, root / "data", metrics::MaeVariant::per_coordinate);
  CHECK(ev.slices.size() == 12);
  write_evaluation(ev, root / "eval_a");
  CHECK(fs::exists(root / "eval_a" / "eval.txt"));
  const auto t = compare_runs(root / "eval_a", root / "eval_a", "abs_prob_err");
  CHECK(t.degenerate);
  CHECK(t.p == 1.0);

  auto partial = data.truth;
  partial.erase(partial.begin());
  CHECK_THROWS_AS(evaluate_run(root / "run_a", partial, std::nullopt, metrics::MaeVariant::literal), AlignmentError);
  CHECK_THROWS_AS(compare_runs(root / "eval_a", root / "eval_a", "no_such_column"), Error);
  fs::remove_all(root);
}
