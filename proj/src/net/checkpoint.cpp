#include "cade/net/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cade/binary_io.hpp"

namespace cade::net {

std::optional<double> Checkpoint::stat(const std::string& name) const {
  for (const auto& [k, v] : stats) {
    if (k == name) return v;
  }
  return std::nullopt;
}

double Checkpoint::require_stat(const std::string& name) const {
  if (auto v = stat(name)) return *v;
  throw ConfigError("checkpoint is missing '" + name + "'");
}

void Checkpoint::set_stat(const std::string& name, double value) {
  for (auto& [k, v] : stats) {
    if (k == name) {
      v = value;
      return;
    }
  }
  stats.emplace_back(name, value);
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  if (a.version != b.version || a.tensors.size() != b.tensors.size() || a.stats.size() != b.stats.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto& x = a.tensors[i];
    const auto& y = b.tensors[i];
    if (x.name != y.name || x.tensor.dims() != y.tensor.dims()) return false;
    if (std::memcmp(x.tensor.data(), y.tensor.data(), x.tensor.size() * sizeof(float)) != 0) return false;
  }
  for (std::size_t i = 0; i < a.stats.size(); ++i) {
    if (a.stats[i].first != b.stats[i].first ||
        std::bit_cast<std::uint64_t>(a.stats[i].second) != std::bit_cast<std::uint64_t>(b.stats[i].second)) {
      return false;
    }
  }
  return true;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.bytes("MIC1", 4);
  w.u32(ckpt.version);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.str16(t.name);
    w.u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (auto d : t.tensor.dims()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.tensor.values()) w.f32(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.stats.size()));
  for (const auto& [name, value] : ckpt.stats) {
    w.str16(name);
    w.f64(value);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes, "checkpoint");
  if (r.fixed(4) != "MIC1") throw FormatError("checkpoint: bad magic");
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != Checkpoint::kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(ckpt.version));
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str16();
    const Dims dims = r.dims();
    const std::size_t n = element_count(dims);
    r.require(n * 4, t.name);
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    t.tensor = TensorF(dims, std::move(data));
    ckpt.tensors.push_back(std::move(t));
  }
  const std::uint32_t stat_count = r.u32();
  for (std::uint32_t i = 0; i < stat_count; ++i) {
    std::string name = r.str16();
    ckpt.stats.emplace_back(std::move(name), r.f64());
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after stats block");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

void check_compatible(const Checkpoint& ckpt, const NetworkSpec& spec) {
  const auto layout = parameter_layout(spec);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (i >= ckpt.tensors.size()) throw ConfigError("checkpoint lacks tensor " + layout[i].name);
    const auto& t = ckpt.tensors[i];
    if (t.name != layout[i].name || t.tensor.dims() != layout[i].dims) {
      throw ConfigError("checkpoint tensor " + t.name + " (" + dims_string(t.tensor.dims()) +
                        ") does not match expected " + layout[i].name + " (" + dims_string(layout[i].dims) + ")");
    }
  }
  if (ckpt.tensors.size() != layout.size()) {
    throw ConfigError("checkpoint has unexpected extra tensor " + ckpt.tensors[layout.size()].name);
  }
}

Checkpoint to_checkpoint(const Network<float>& net) {
  Checkpoint ckpt;
  const auto layout = parameter_layout(net.spec());
  for (std::size_t i = 0; i < layout.size(); ++i) ckpt.tensors.push_back({layout[i].name, net.params()[i]});
  return ckpt;
}

Network<float> network_from_checkpoint(const NetworkSpec& spec, const Checkpoint& ckpt) {
  check_compatible(ckpt, spec);
  std::vector<TensorF> params;
  for (const auto& t : ckpt.tensors) params.push_back(t.tensor);
  return Network<float>(spec, std::move(params));
}

void record_architecture(Checkpoint& ckpt, NetKind kind, const ArchOptions& options) {
  ckpt.set_stat("arch.kind", kind == NetKind::ccnn ? 0.0 : kind == NetKind::dcnn ? 1.0 : 2.0);
  ckpt.set_stat("arch.leaky_alpha", options.leaky_alpha);
  ckpt.set_stat("arch.kernel_size", static_cast<double>(options.kernel_size));
  ckpt.set_stat("arch.extra_block", options.extra_block ? 1.0 : 0.0);
  ckpt.set_stat("arch.dropout", options.dropout);
}

NetworkSpec spec_from_checkpoint(const Checkpoint& ckpt) {
  ArchOptions o;
  o.leaky_alpha = ckpt.stat("arch.leaky_alpha").value_or(0.0);
  o.kernel_size = static_cast<std::size_t>(ckpt.stat("arch.kernel_size").value_or(3.0));
  o.extra_block = ckpt.stat("arch.extra_block").value_or(0.0) != 0.0;
  o.dropout = ckpt.stat("arch.dropout").value_or(-1.0);
  const double kind = ckpt.require_stat("arch.kind");
  if (kind == 0.0) return build_ccnn(o);
  if (kind == 1.0) return build_dcnn(o);
  throw ConfigError("checkpoint does not describe a c-cnn or d-cnn");
}

}  // namespace cade::net
