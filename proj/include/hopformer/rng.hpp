// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace hopformer {

/// Seeded generator with portable derived draws.
///
/// std::*_distribution output is implementation-defined, so the draws below
/// are computed directly from the 64-bit engine to keep runs bit-reproducible
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one draw per call).
  double normal();

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream tag so independent consumers do not
/// share a sequence.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace hopformer
