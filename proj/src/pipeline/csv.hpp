#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "cade/error.hpp"

namespace cade::pipeline::csv {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

/// Rows of a CSV whose first line must equal `header`; each row must have
/// as many fields as the header.
inline std::vector<std::vector<std::string>> read(const std::string& text, const std::string& header,
                                                  const std::string& what) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<std::string>> rows;
  const std::size_t width = split(header).size();
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!seen_header) {
      if (line != header) throw ParseError(what + " line " + std::to_string(line_no) + ": unexpected header");
      seen_header = true;
      continue;
    }
    auto f = split(line);
    if (f.size() != width) {
      throw ParseError(what + " line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " fields, got " + std::to_string(f.size()));
    }
    rows.push_back(std::move(f));
  }
  if (!seen_header) throw ParseError(what + ": empty file");
  return rows;
}

}  // namespace cade::pipeline::csv
