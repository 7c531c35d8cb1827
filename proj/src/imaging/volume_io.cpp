#include "cade/imaging/volume_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "cade/binary_io.hpp"

namespace cade::imaging {

std::vector<std::uint8_t> encode_volume(const TensorF& volume) {
  io::ByteWriter w;
  w.bytes("MIV1", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(volume.rank()));
  for (auto d : volume.dims()) w.u32(static_cast<std::uint32_t>(d));
  w.bytes(volume.data(), volume.size() * sizeof(float));
  return w.take();
}

TensorF decode_volume(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes, "volume");
  if (r.fixed(4) != "MIV1") throw FormatError("volume: bad magic");
  const std::uint32_t version = r.u32();
  if (version != 1) throw FormatError("volume: unsupported version " + std::to_string(version));
  const Dims dims = r.dims();
  std::vector<float> data(element_count(dims));
  for (auto& v : data) v = r.f32();
  if (!r.at_end()) throw FormatError("volume: trailing bytes after payload");
  return TensorF(dims, std::move(data));
}

void save_volume(const TensorF& volume, const std::filesystem::path& path) {
  io::write_file(path, encode_volume(volume));
}

TensorF load_volume(const std::filesystem::path& path) { return decode_volume(io::read_file(path)); }

namespace {

void write_p5(const std::vector<std::uint8_t>& pixels, std::size_t h, std::size_t w, const std::filesystem::path& path) {
  std::ostringstream header;
  header << "P5\n" << w << " " << h << "\n255\n";
  const std::string hs = header.str();
  std::vector<std::uint8_t> bytes(hs.begin(), hs.end());
  bytes.insert(bytes.end(), pixels.begin(), pixels.end());
  io::write_file(path, bytes);
}

}  // namespace

void save_pgm(const Mask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> px(mask.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.data[i] ? 255 : 0;
  write_p5(px, mask.height, mask.width, path);
}

void save_pgm(const TensorF& slice, double lo, double hi, const std::filesystem::path& path) {
  if (slice.rank() != 2) throw ShapeError("save_pgm expects an H x W slice");
  if (!(hi > lo)) throw ArgumentError("save_pgm needs hi > lo");
  std::vector<std::uint8_t> px(slice.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = std::clamp((double(slice[i]) - lo) / (hi - lo), 0.0, 1.0);
    px[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_p5(px, slice.dim(0), slice.dim(1), path);
}

Mask load_pgm_mask(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  std::string text(bytes.begin(), bytes.begin() + std::ptrdiff_t(std::min<std::size_t>(bytes.size(), 64)));
  std::istringstream in(text);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || !in || maxval != 255) throw FormatError("not an 8-bit binary PGM: " + path.string());
  const auto offset = static_cast<std::size_t>(in.tellg()) + 1;
  if (bytes.size() != offset + w * h) throw FormatError("PGM payload size mismatch: " + path.string());
  Mask m(h, w);
  for (std::size_t i = 0; i < w * h; ++i) m.data[i] = bytes[offset + i] != 0;
  return m;
}

}  // namespace cade::imaging
