#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace s2g {

/// Seeded generator with platform-stable draws.
///
/// The engine is std::mt19937_64 (fully specified by the standard). The
/// distribution helpers are hand-written because the standard library
/// distributions are implementation-defined, and every run must reproduce
/// the same stream on any toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one draw per call; the pair's
  /// second value is cached).
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Poisson draw by inversion (small means only).
  unsigned poisson(double mean);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Derive an independent child seed from this stream.
  std::uint64_t fork_seed() { return next() ^ 0x9E3779B97F4A7C15ULL; }

 private:
  std::mt19937_64 engine_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

/// Stateless mixing of a base seed with a stream index (splitmix64).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace s2g
