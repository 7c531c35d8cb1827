#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "cade/error.hpp"
#include "cade/tensor.hpp"

// Little-endian byte buffers shared by the volume and checkpoint formats.
namespace cade::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void str16(const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) throw ArgumentError("name too long: " + s);
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& buf, std::string what) : buf_(buf), what_(std::move(what)) {}

  void require(std::size_t n, const std::string& field) const {
    if (buf_.size() - pos_ < n) throw FormatError(what_ + ": truncated while reading " + field);
  }
  std::string fixed(std::size_t n) {
    require(n, "magic");
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T scalar(const char* field) {
    require(sizeof(T), field);
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::uint16_t u16() { return scalar<std::uint16_t>("u16"); }
  std::uint32_t u32() { return scalar<std::uint32_t>("u32"); }
  float f32() { return scalar<float>("f32"); }
  double f64() { return scalar<double>("f64"); }
  std::string str16() {
    const std::uint16_t n = u16();
    require(n, "name");
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  /// u32 ndim followed by u32 extents; rejects zero extents and products
  /// that overflow or exceed the remaining payload.
  Dims dims() {
    const std::uint32_t ndim = u32();
    require(std::size_t(ndim) * 4, "dims");
    Dims d(ndim);
    std::size_t total = 1;
    for (auto& e : d) {
      e = u32();
      if (e == 0) throw FormatError(what_ + ": zero extent");
      if (total > std::numeric_limits<std::size_t>::max() / 4 / e) throw FormatError(what_ + ": extent overflow");
      total *= e;
    }
    if (total > (buf_.size() - pos_) / 4) throw FormatError(what_ + ": truncated payload");
    return d;
  }
  bool at_end() const noexcept { return pos_ == buf_.size(); }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace cade::io
