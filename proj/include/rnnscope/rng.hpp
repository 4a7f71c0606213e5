#pragma once

#include <cstdint>

namespace rnnscope {

/// Deterministic random source. All draws are implemented in terms of the
/// raw 64-bit stream so that results are identical across platforms and
/// standard-library versions (std::uniform_int_distribution and friends are
/// implementation-defined and would break byte-reproducibility).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n). Unbiased via rejection. n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (pairs cached).
  double gaussian();

  /// Derive an independent deterministic substream.
  Rng fork(std::uint64_t stream) const;

  /// Stateless mixing of (seed, index) into a fresh seed; used for
  /// per-example and per-trial substreams.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t index);

 private:
  std::uint64_t state_;
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

}  // namespace rnnscope
