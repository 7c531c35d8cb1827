#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cade/error.hpp"

namespace cade::kv {

/// Flat key=value text: one pair per line, '#' starts a comment line, blank
/// lines ignored. Keys keep their file order.
struct Document {
  std::vector<std::pair<std::string, std::string>> entries;

  std::optional<std::string> get(const std::string& key) const;
  std::string require(const std::string& key) const;  // FormatError when absent
  std::optional<double> number(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);
  std::map<std::string, std::string> as_map() const;
};

/// ParseError with the line number on a line lacking '=', an empty key or a
/// repeated key.
Document parse(const std::string& text, const std::string& what = "key=value file");
std::string format(const Document& doc);
Document load(const std::filesystem::path& path);
void save(const Document& doc, const std::filesystem::path& path);

/// Shortest round-tripping decimal form ("%.17g" trimmed).
std::string format_number(double v);
/// Strict numeric parse of a whole field; FormatError otherwise.
double parse_number(const std::string& text, const std::string& what);

}  // namespace cade::kv
