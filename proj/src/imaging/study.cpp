#include "cade/imaging/study.hpp"

#include <algorithm>
#include <cmath>

#include "cade/imaging/volume_io.hpp"

namespace cade::imaging {

std::string_view sequence_name(Sequence s) { return kSequenceNames[static_cast<std::size_t>(s)]; }

Sequence sequence_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kSequenceCount; ++i) {
    if (kSequenceNames[i] == name) return static_cast<Sequence>(i);
  }
  if (name == "T2FLAIR") return Sequence::FLAIR;
  throw ConfigError("unknown sequence '" + std::string(name) + "' (expected T1, T1c, T2 or FLAIR)");
}

void Study::validate() const {
  const Dims& d = sequences[0].dims();
  if (d.size() != 3) throw ValidationError(patient_id + ": volumes must be S x H x W");
  for (std::size_t i = 0; i < kSequenceCount; ++i) {
    if (sequences[i].dims() != d) {
      throw ValidationError(patient_id + ": sequence " + std::string(kSequenceNames[i]) + " has dims " +
                            dims_string(sequences[i].dims()) + ", expected " + dims_string(d));
    }
    for (float v : sequences[i].values()) {
      if (!std::isfinite(v)) {
        throw ValidationError(patient_id + ": non-finite intensity in " + std::string(kSequenceNames[i]));
      }
    }
  }
}

TensorF volume_slice(const TensorF& volume, std::size_t index) {
  if (volume.rank() != 3 || index >= volume.dim(0)) throw ShapeError("slice index out of range");
  return volume.slab(index);
}

const SliceTruth* PatientTruth::find(std::size_t slice) const {
  auto it = std::lower_bound(slices.begin(), slices.end(), slice,
                             [](const SliceTruth& s, std::size_t v) { return s.slice < v; });
  return it != slices.end() && it->slice == slice ? &*it : nullptr;
}

Study load_study(const std::filesystem::path& root, const std::string& patient_id) {
  Study s;
  s.patient_id = patient_id;
  for (std::size_t i = 0; i < kSequenceCount; ++i) {
    s.sequences[i] = load_volume(root / patient_id / (std::string(kSequenceNames[i]) + ".miv"));
  }
  s.validate();
  return s;
}

void save_study(const Study& study, const std::filesystem::path& root) {
  const auto dir = root / study.patient_id;
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < kSequenceCount; ++i) {
    save_volume(study.sequences[i], dir / (std::string(kSequenceNames[i]) + ".miv"));
  }
}

std::vector<std::string> list_patients(const std::filesystem::path& root) {
  std::vector<std::string> ids;
  if (!std::filesystem::is_directory(root)) throw IoError("not a directory: " + root.string());
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "T1.miv")) {
      ids.push_back(entry.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace cade::imaging
