#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>

namespace cade {

/// Seedable random stream. Streams derived with split() are independent of
/// each other and of the parent, so every stochastic consumer (init,
/// dropout, augmentation, shuffling) can own its own stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  /// Child stream keyed by `id`; does not advance this stream.
  Rng split(std::uint64_t id) const {
    return Rng(seed_ ^ (0x9E3779B97F4A7C15ULL * (stream_ + 1)), id + 0x632BE59BD9B4E019ULL * (stream_ + 1));
  }

  std::uint64_t next() { return engine_(); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal(double mean = 0.0, double sd = 1.0) {
    return std::normal_distribution<double>(mean, sd)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    std::shuffle(items.begin(), items.end(), engine_);
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace cade
