#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace talesumm {

/// Seeded pseudo-random source used by every stochastic operation.
///
/// The engine is 64-bit Mersenne Twister (std::mt19937_64) seeded with the
/// full 64-bit seed. Uniform and normal variates are derived from raw engine
/// output by fixed formulas (53-bit mantissa fill, Box-Muller) rather than
/// the implementation-defined std distributions, so a given seed yields the
/// same stream on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), rejection-sampled.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Standard normal via Box-Muller.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle driven by uniform_int.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

/// SplitMix64 finalizer; derives independent sub-seeds from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace talesumm
