#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cade/net/network.hpp"

namespace cade::net {

struct NamedTensor {
  std::string name;
  TensorF tensor;
};

/// Trained weights plus the scalar metadata (hyperparameters, architecture
/// options, standardization statistics) needed to rebuild and run a network.
///
/// File layout, all integers little-endian:
///   "MIC1" | u32 version | u32 tensor count
///   per tensor: u16 name length | name bytes | u32 ndim | u32 dims[ndim] | f32 data
///   u32 stat count | per stat: u16 name length | name bytes | f64 value
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::vector<NamedTensor> tensors;
  std::vector<std::pair<std::string, double>> stats;

  std::optional<double> stat(const std::string& name) const;
  double require_stat(const std::string& name) const;  // ConfigError when absent
  void set_stat(const std::string& name, double value);

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Parses a complete buffer; FormatError on bad magic/version, truncation or
/// inconsistent extents.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Throws ConfigError naming the first tensor whose name or shape disagrees
/// with `spec`.
void check_compatible(const Checkpoint& ckpt, const NetworkSpec& spec);

Checkpoint to_checkpoint(const Network<float>& net);
Network<float> network_from_checkpoint(const NetworkSpec& spec, const Checkpoint& ckpt);

/// Stores the network kind and ablation options so the NetworkSpec can be rebuilt.
void record_architecture(Checkpoint& ckpt, NetKind kind, const ArchOptions& options);
NetworkSpec spec_from_checkpoint(const Checkpoint& ckpt);

}  // namespace cade::net
