#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "cade/imaging/study.hpp"

namespace cade::imaging {

using GroundTruth = std::map<std::string, PatientTruth>;

inline constexpr const char* kGroundTruthHeader = "patient_id,slice_idx,label,x_ul,y_ul,width,height";

/// Parses the ground-truth CSV. ParseError (with line number) on malformed
/// rows; ValidationError when a normal row carries a box, an abnormal row
/// lacks one, or a box leaves `native_dims` (height, width) when given.
GroundTruth parse_ground_truth(const std::string& text,
                               std::optional<std::pair<std::size_t, std::size_t>> native_dims = std::nullopt);
GroundTruth load_ground_truth(const std::filesystem::path& path,
                              std::optional<std::pair<std::size_t, std::size_t>> native_dims = std::nullopt);

std::string format_ground_truth(const GroundTruth& truth);
void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);

}  // namespace cade::imaging
