// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "hopformer/autograd.hpp"
#include "hopformer/hop_mask.hpp"

namespace hopformer::ag {

struct AttentionOptions {
  double dropout = 0.0;     // on attention weights, inverted scaling
  std::uint64_t seed = 0;
  bool training = false;
};

/// Scaled dot-product attention evaluated only on the stored entries of
/// `mask`: softmax over each row's support (row max subtracted), then a
/// weighted sum of value rows. Cost is proportional to nnz * d_h in both
/// directions; no T x T buffer is formed. Row sums run in ascending column
/// order. If `weights_out` is given it receives the softmax weights in CSR
/// order (before dropout).
Tensor sparse_masked_attention(Tape& t, const Tensor& q, const Tensor& k, const Tensor& v,
                               const HopMaskPtr& mask, const AttentionOptions& opts = {},
                               std::vector<double>* weights_out = nullptr);

}  // namespace hopformer::ag
