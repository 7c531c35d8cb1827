#include "cade/imaging/ground_truth.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "cade/binary_io.hpp"

namespace cade::imaging {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) fields.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

long parse_int(const std::string& field, std::size_t line_no, const char* what) {
  long v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc{} || ptr != end) {
    throw ParseError("ground truth line " + std::to_string(line_no) + ": bad " + what + " '" + field + "'");
  }
  return v;
}

}  // namespace

GroundTruth parse_ground_truth(const std::string& text, std::optional<std::pair<std::size_t, std::size_t>> native_dims) {
  GroundTruth truth;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!header_seen) {
      if (trim(line) != kGroundTruthHeader) {
        throw ParseError("ground truth line " + std::to_string(line_no) + ": expected header '" +
                         kGroundTruthHeader + "'");
      }
      header_seen = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 7) {
      throw ParseError("ground truth line " + std::to_string(line_no) + ": expected 7 fields, got " +
                       std::to_string(f.size()));
    }
    if (f[0].empty()) throw ParseError("ground truth line " + std::to_string(line_no) + ": empty patient id");
    const long slice = parse_int(f[1], line_no, "slice index");
    if (slice < 0) throw ParseError("ground truth line " + std::to_string(line_no) + ": negative slice index");
    SliceTruth st;
    st.slice = std::size_t(slice);
    const bool has_box = std::any_of(f.begin() + 3, f.end(), [](const std::string& s) { return !s.empty(); });
    if (f[2] == "normal") {
      st.label = SliceLabel::normal;
      if (has_box) {
        throw ValidationError("ground truth line " + std::to_string(line_no) + ": normal slice carries a box");
      }
    } else if (f[2] == "abnormal") {
      st.label = SliceLabel::abnormal;
      if (!has_box) {
        throw ValidationError("ground truth line " + std::to_string(line_no) + ": abnormal slice without a box");
      }
      BoundingBox b{int(parse_int(f[3], line_no, "x_ul")), int(parse_int(f[4], line_no, "y_ul")),
                    int(parse_int(f[5], line_no, "width")), int(parse_int(f[6], line_no, "height"))};
      if (!b.valid()) {
        throw ValidationError("ground truth line " + std::to_string(line_no) + ": box must have positive size");
      }
      if (native_dims && !b.inside(native_dims->first, native_dims->second)) {
        throw ValidationError("ground truth line " + std::to_string(line_no) + ": box outside " +
                              std::to_string(native_dims->first) + "x" + std::to_string(native_dims->second) +
                              " image");
      }
      st.box = b;
    } else {
      throw ParseError("ground truth line " + std::to_string(line_no) + ": unknown label '" + f[2] + "'");
    }
    auto& patient = truth[f[0]];
    patient.patient_id = f[0];
    if (patient.find(st.slice)) {
      throw ValidationError("ground truth line " + std::to_string(line_no) + ": duplicate slice " + f[1]);
    }
    patient.slices.push_back(st);
    std::sort(patient.slices.begin(), patient.slices.end(),
              [](const SliceTruth& a, const SliceTruth& b) { return a.slice < b.slice; });
  }
  return truth;
}

GroundTruth load_ground_truth(const std::filesystem::path& path,
                              std::optional<std::pair<std::size_t, std::size_t>> native_dims) {
  const auto bytes = io::read_file(path);
  return parse_ground_truth(std::string(bytes.begin(), bytes.end()), native_dims);
}

std::string format_ground_truth(const GroundTruth& truth) {
  std::ostringstream out;
  out << kGroundTruthHeader << "\n";
  for (const auto& [id, patient] : truth) {
    for (const auto& s : patient.slices) {
      out << id << "," << s.slice << ",";
      if (s.box) {
        out << "abnormal," << s.box->x_ul << "," << s.box->y_ul << "," << s.box->width << "," << s.box->height;
      } else {
        out << "normal,,,,";
      }
      out << "\n";
    }
  }
  return out.str();
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  const std::string text = format_ground_truth(truth);
  io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace cade::imaging
