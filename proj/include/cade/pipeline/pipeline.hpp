#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cade/imaging/ground_truth.hpp"
#include "cade/imaging/preprocess.hpp"
#include "cade/imaging/study.hpp"
#include "cade/kv.hpp"
#include "cade/metrics/metrics.hpp"
#include "cade/net/network.hpp"
#include "cade/net/train.hpp"
#include "cade/seg/growcut.hpp"

namespace cade::pipeline {

namespace fs = std::filesystem;

inline constexpr std::size_t kInputSize = 96;

// ---- preparation -----------------------------------------------------------

kv::Document stats_document(const imaging::StandardizationStats& stats);
imaging::StandardizationStats stats_from_document(const kv::Document& doc);
imaging::StandardizationStats stats_from_checkpoint(const net::Checkpoint& ckpt);

/// Median filter, standardization and resize of every slice: each sequence
/// becomes S x size x size.
imaging::Study to_network_space(const imaging::Study& raw, const imaging::StandardizationStats& stats,
                                std::size_t size = kInputSize);

/// Ground-truth boxes of one patient moved from native to size x size pixels.
imaging::PatientTruth rescale_truth(const imaging::PatientTruth& truth, std::size_t native_height,
                                    std::size_t native_width, std::size_t size = kInputSize);

struct PreprocessSummary {
  imaging::StandardizationStats stats;
  std::size_t patients = 0;
  bool stats_computed = false;
};

/// Converts a raw study directory into network space. Statistics come from
/// `stats_file` when given, otherwise from every study in `in`. Writes the
/// volumes, stats.txt and (when `in` has one) a rescaled ground_truth.csv.
PreprocessSummary preprocess_directory(const fs::path& in, const fs::path& out,
                                       const std::optional<fs::path>& stats_file, std::size_t size = kInputSize);

/// Training samples from network-space studies: every slice for the
/// classifier, abnormal slices with their boxes for the detector.
net::Dataset build_dataset(std::span<const imaging::Study> studies, const imaging::GroundTruth& truth,
                           net::NetKind kind);

/// Loads a preprocessed directory (studies, stats.txt, ground_truth.csv) as
/// a training set.
net::Dataset load_training_set(const fs::path& dir, net::NetKind kind);

/// N x 4 x H x W network input of a network-space study.
TensorF stack_slices(const imaging::Study& study);

// ---- inference --------------------------------------------------------------

struct PipelineConfig {
  fs::path volumes;
  fs::path ccnn_checkpoint;
  fs::path dcnn_checkpoint;
  fs::path output;
  double abnormal_threshold = 0.05;  // share of flagged slices a study must exceed
  double decision_threshold = 0.5;   // slice probability above which a slice is flagged
  imaging::Sequence growcut_sequence = imaging::Sequence::T2;
  std::size_t growcut_max_iter = 500;
  metrics::MaeVariant mae_variant = metrics::MaeVariant::per_coordinate;
  bool deterministic = true;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Abnormal iff flagged / total strictly exceeds the threshold.
bool study_is_abnormal(std::size_t flagged, std::size_t total, double threshold);

struct Classification {
  std::vector<double> probabilities;
  std::vector<int> flagged;
  double abnormal_fraction = 0.0;
  bool abnormal = false;
};

Classification classify_study(const net::Network<float>& ccnn, const TensorF& input, double decision_threshold,
                              double abnormal_threshold);

enum class BoxStatus { none, ok, detection_failed };
enum class MaskStatus { none, ok, detection_failed, seeding_error };
std::string to_string(BoxStatus s);
std::string to_string(MaskStatus s);
BoxStatus box_status_from_string(const std::string& s);
MaskStatus mask_status_from_string(const std::string& s);

struct Detection {
  std::size_t slice = 0;
  BoxF raw;                          // network-space regression output
  std::optional<BoundingBox> box;    // native, absent when rejected
};

/// Regression outputs with non-positive width or height are rejected;
/// accepted boxes are rescaled to native pixels and clamped.
std::optional<BoundingBox> to_native_box(const BoxF& raw, std::size_t size, std::size_t native_height,
                                         std::size_t native_width);

std::vector<Detection> detect_boxes(const net::Network<float>& dcnn, const TensorF& input,
                                    std::span<const std::size_t> slices, std::size_t native_height,
                                    std::size_t native_width);

struct SliceSegmentation {
  std::size_t slice = 0;
  MaskStatus status = MaskStatus::none;
  Mask mask;
  std::size_t iterations = 0;
  bool converged = false;
  std::string message;
};

/// GrowCut on one sequence of a native-resolution preprocessed study for
/// each requested slice. Missing boxes and seeding failures are flagged per
/// slice.
std::vector<SliceSegmentation> segment_study(const imaging::Study& study,
                                             std::span<const std::pair<std::size_t, std::optional<BoundingBox>>> boxes,
                                             imaging::Sequence sequence, std::size_t max_iter);

struct SliceRecord {
  std::string patient_id;
  std::size_t slice = 0;
  std::size_t native_height = 0, native_width = 0;
  double probability = 0.0;
  int predicted = 0;
  bool study_abnormal = false;
  BoxStatus box_status = BoxStatus::none;
  std::optional<BoxF> raw_box;
  std::optional<BoundingBox> box;
  MaskStatus mask_status = MaskStatus::none;
  std::string mask_path;
  std::size_t iterations = 0;
  bool converged = false;
};

struct PatientRecord {
  std::string patient_id;
  std::size_t slices = 0;
  std::size_t flagged = 0;
  double abnormal_fraction = 0.0;
  bool abnormal = false;
};

struct CadeReport {
  kv::Document summary;
  std::vector<PatientRecord> patients;
  std::vector<SliceRecord> slices;
};

inline constexpr const char* kSlicesHeader =
    "patient_id,slice_idx,native_height,native_width,probability,predicted,study_abnormal,box_status,"
    "raw_x,raw_y,raw_w,raw_h,x_ul,y_ul,width,height,mask_status,mask_path,iterations,converged";

std::string format_slices(std::span<const SliceRecord> slices);
std::vector<SliceRecord> parse_slices(const std::string& text);

/// Full flow over every patient in config.volumes: classify, apply the
/// patient rule, detect, segment. Writes report.txt, slices.csv and masks/.
CadeReport run_pipeline(const PipelineConfig& config);

/// Segmentation only, for boxes given in ground-truth CSV form. Writes
/// segment.txt, slices.csv and masks/.
CadeReport run_segmentation(const fs::path& volumes, const fs::path& boxes_csv, const fs::path& output,
                            imaging::Sequence sequence, std::size_t max_iter);

// ---- evaluation -------------------------------------------------------------

struct EvalSlice {
  std::string patient_id;
  std::size_t slice = 0;
  int truth = 0;
  double probability = 0.0;
  int predicted = 0;
  std::optional<BoxF> raw_box;                 // network space
  std::optional<BoundingBox> box;              // native
  std::optional<BoundingBox> truth_box;        // native
  std::optional<BoundingBox> truth_box_input;  // network space
  std::size_t native_height = 0, native_width = 0;
  std::optional<double> seg_dsc;      // produced masks only
  std::optional<double> seg_dsc_all;  // every slice with a tumor or a mask
};

/// Pure summary of aligned slices: classification scores, box MAE in both
/// variants and both spaces, box DSC and segmentation DSC.
kv::Document summarize(std::span<const EvalSlice> slices, metrics::MaeVariant headline,
                       const std::string& sequence_name);

struct Evaluation {
  kv::Document summary;
  std::vector<EvalSlice> slices;
};

/// Aligns a run directory with native ground truth. `masks_dir` holds
/// <patient>/mask.miv reference masks. Throws AlignmentError listing
/// offending ids.
Evaluation evaluate_run(const fs::path& run_dir, const imaging::GroundTruth& truth,
                        const std::optional<fs::path>& masks_dir, metrics::MaeVariant headline);

inline constexpr const char* kEvalHeader =
    "patient_id,slice_idx,truth,probability,predicted,correct,abs_prob_err,box_abs_err,box_abs_err_literal,"
    "box_dsc,seg_dsc,seg_dsc_all";
std::string format_eval_slices(std::span<const EvalSlice> slices);
void write_evaluation(const Evaluation& eval, const fs::path& out_dir);

/// Paired t-test of one per-slice column between two eval_slices.csv files,
/// over the slices where both have a value.
metrics::TTestResult compare_runs(const fs::path& eval_a, const fs::path& eval_b, const std::string& metric);

}  // namespace cade::pipeline
