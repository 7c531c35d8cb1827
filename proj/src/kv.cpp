#include "cade/kv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cade/binary_io.hpp"

namespace cade::kv {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

std::optional<std::string> Document::get(const std::string& key) const {
  for (const auto& [k, v] : entries) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string Document::require(const std::string& key) const {
  auto v = get(key);
  if (!v) throw FormatError("missing key '" + key + "'");
  return *v;
}

std::optional<double> Document::number(const std::string& key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  return parse_number(*v, key);
}

void Document::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries.emplace_back(key, value);
}

void Document::set(const std::string& key, double value) { set(key, format_number(value)); }

void Document::set(const std::string& key, long long value) { set(key, std::to_string(value)); }

std::map<std::string, std::string> Document::as_map() const { return {entries.begin(), entries.end()}; }

Document parse(const std::string& text, const std::string& what) {
  Document doc;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(what + " line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError(what + " line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) {
      throw ParseError(what + " line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
    doc.entries.emplace_back(std::move(key), std::move(value));
  }
  return doc;
}

std::string format(const Document& doc) {
  std::string out;
  for (const auto& [k, v] : doc.entries) out += k + "=" + v + "\n";
  return out;
}

Document load(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse(std::string(bytes.begin(), bytes.end()), path.string());
}

void save(const Document& doc, const std::filesystem::path& path) {
  const std::string text = format(doc);
  io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

double parse_number(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  if (t == "nan") return std::nan("");
  if (t == "inf") return HUGE_VAL;
  if (t == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc{} || ptr != end) throw FormatError("'" + what + "': not a number: '" + text + "'");
  return v;
}

}  // namespace cade::kv
