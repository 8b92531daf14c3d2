#pragma once

#include <cstdint>
#include <random>

namespace msmsharp {

/// SplitMix64 finalizer: a bijection on 64-bit words with full avalanche.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seed for replicate `index` of a run keyed by `master_seed`.
/// Defined as mix64(master_seed + (index + 1) * 0x9E3779B97F4A7C15); the
/// map is injective in `index` for a fixed master seed and does not depend
/// on which thread evaluates it.
std::uint64_t derive_replicate_seed(std::uint64_t master_seed, std::uint64_t index) noexcept;

/// Reproducible random stream: std::mt19937_64 (whose output sequence is
/// fixed by the C++ standard) with hand-rolled variate transforms, so the
/// same seed yields the same numbers on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal by inversion of the normal CDF.
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n), rejection sampled (no modulo bias).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace msmsharp
