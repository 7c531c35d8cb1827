#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cade/geometry.hpp"
#include "cade/tensor.hpp"

namespace cade::imaging {

enum class Sequence : std::size_t { T1 = 0, T1c = 1, T2 = 2, FLAIR = 3 };
inline constexpr std::size_t kSequenceCount = 4;
inline constexpr std::array<std::string_view, kSequenceCount> kSequenceNames{"T1", "T1c", "T2", "FLAIR"};

std::string_view sequence_name(Sequence s);
Sequence sequence_from_string(std::string_view name);

/// One patient: four co-registered S x H x W volumes.
struct Study {
  std::string patient_id;
  std::array<TensorF, kSequenceCount> sequences;

  const TensorF& sequence(Sequence s) const { return sequences[static_cast<std::size_t>(s)]; }
  TensorF& sequence(Sequence s) { return sequences[static_cast<std::size_t>(s)]; }
  std::size_t slices() const { return sequences[0].dim(0); }
  std::size_t height() const { return sequences[0].dim(1); }
  std::size_t width() const { return sequences[0].dim(2); }

  /// Throws ValidationError unless all four volumes share S x H x W and all
  /// intensities are finite.
  void validate() const;
};

/// Copy of slice `index` of a 3-D volume as H x W.
TensorF volume_slice(const TensorF& volume, std::size_t index);

enum class SliceLabel { normal, abnormal };

struct SliceTruth {
  std::size_t slice = 0;
  SliceLabel label = SliceLabel::normal;
  std::optional<BoundingBox> box;  // present iff abnormal, native coordinates
};

struct PatientTruth {
  std::string patient_id;
  std::vector<SliceTruth> slices;  // sorted by slice index

  const SliceTruth* find(std::size_t slice) const;
};

/// Study directory layout: <root>/<patient>/{T1,T1c,T2,FLAIR}.miv
Study load_study(const std::filesystem::path& root, const std::string& patient_id);
void save_study(const Study& study, const std::filesystem::path& root);

/// Patient sub-directories of `root` that contain a T1.miv, sorted.
std::vector<std::string> list_patients(const std::filesystem::path& root);

}  // namespace cade::imaging
