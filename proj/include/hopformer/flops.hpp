// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

namespace hopformer {

/// Forward-pass FLOP conventions: one multiply-add = 2 FLOPs, each exp,
/// divide, compare-free subtract or scale = 1 FLOP. Comparisons are free.
namespace flop_cost {

constexpr std::uint64_t matmul(std::uint64_t m, std::uint64_t k, std::uint64_t n) {
  return 2 * m * k * n;
}
constexpr std::uint64_t elementwise(std::uint64_t m, std::uint64_t n) { return m * n; }
/// mean (1), centred square-accumulate (3), normalise (2), affine (2) per
/// element, plus sqrt and reciprocal per row.
constexpr std::uint64_t layer_norm(std::uint64_t m, std::uint64_t n) { return 8 * m * n + 2 * m; }
/// Per stored entry: q.k (2 d_h), scale (1), max-subtract (1), exp (1),
/// normaliser add (1), divide (1), weighted value accumulate (2 d_h).
constexpr std::uint64_t attention(std::uint64_t nnz, std::uint64_t head_dim) {
  return nnz * (4 * head_dim + 5);
}

}  // namespace flop_cost

struct FlopTally {
  std::uint64_t attention = 0;
  std::uint64_t dense = 0;
  std::uint64_t total() const { return attention + dense; }
};

void count_dense_flops(std::uint64_t n);
void count_attention_flops(std::uint64_t n);

/// Counts FLOPs executed by forward primitives on this thread while alive.
/// Meters nest; the innermost one receives the counts.
class ScopedFlopMeter {
 public:
  ScopedFlopMeter();
  ~ScopedFlopMeter();
  ScopedFlopMeter(const ScopedFlopMeter&) = delete;
  ScopedFlopMeter& operator=(const ScopedFlopMeter&) = delete;

  const FlopTally& tally() const { return tally_; }

 private:
  friend void count_dense_flops(std::uint64_t n);
  friend void count_attention_flops(std::uint64_t n);
  FlopTally tally_;
  ScopedFlopMeter* previous_;
};

}  // namespace hopformer
