// SPDX-License-Identifier: Apache-2.0
#include "hopformer/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hopformer/error.hpp"
#include "hopformer/flops.hpp"
#include "hopformer/rng.hpp"

namespace hopformer::ag {

Tensor sparse_masked_attention(Tape& t, const Tensor& q, const Tensor& k, const Tensor& v,
                               const HopMaskPtr& mask, const AttentionOptions& opts,
                               std::vector<double>* weights_out) {
  if (!q.value().same_shape(k.value()) || !q.value().same_shape(v.value())) {
    throw ShapeError("sparse_masked_attention: q " + q.value().shape_string() + ", k " +
                     k.value().shape_string() + ", v " + v.value().shape_string() +
                     " must share one shape");
  }
  if (!mask || mask->dim() != q.rows()) {
    throw ShapeError("sparse_masked_attention: mask dimension " +
                     std::to_string(mask ? mask->dim() : 0) + " does not match " +
                     std::to_string(q.rows()) + " tokens");
  }
  if (opts.dropout < 0.0 || opts.dropout >= 1.0) {
    throw std::invalid_argument("sparse_masked_attention: dropout must lie in [0, 1)");
  }

  const CsrPattern& csr = mask->pattern;
  const std::size_t tokens = q.rows();
  const std::size_t head_dim = q.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();

  std::vector<double> weights(csr.nnz());
  Matrix out(tokens, head_dim);
  for (std::size_t i = 0; i < tokens; ++i) {
    const std::size_t begin = csr.row_begin(i), end = csr.row_end(i);
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t j = csr.col_idx[p];
      double s = 0.0;
      for (std::size_t c = 0; c < head_dim; ++c) s += qv(i, c) * kv(j, c);
      weights[p] = s * scale;
      row_max = std::max(row_max, weights[p]);
    }
    double norm = 0.0;
    for (std::size_t p = begin; p < end; ++p) {
      weights[p] = std::exp(weights[p] - row_max);
      norm += weights[p];
    }
    for (std::size_t p = begin; p < end; ++p) weights[p] /= norm;
  }
  count_attention_flops(flop_cost::attention(csr.nnz(), head_dim));

  std::vector<double> keep;  // per-entry dropout factor, empty when inactive
  if (opts.training && opts.dropout > 0.0) {
    Rng rng(opts.seed);
    keep.resize(csr.nnz());
    const double keep_scale = 1.0 / (1.0 - opts.dropout);
    for (double& f : keep) f = rng.bernoulli(opts.dropout) ? 0.0 : keep_scale;
  }

  for (std::size_t i = 0; i < tokens; ++i) {
    for (std::size_t p = csr.row_begin(i); p < csr.row_end(i); ++p) {
      const std::size_t j = csr.col_idx[p];
      const double w = keep.empty() ? weights[p] : weights[p] * keep[p];
      for (std::size_t c = 0; c < head_dim; ++c) out(i, c) += w * vv(j, c);
    }
  }
  if (weights_out) *weights_out = weights;

  return t.record(std::move(out), {q, k, v},
                  [q, k, v, mask, scale, weights = std::move(weights),
                   keep = std::move(keep)](const Matrix& g) {
    const CsrPattern& csr = mask->pattern;
    const std::size_t head_dim = g.cols();
    const Matrix& qv = q.value();
    const Matrix& kv = k.value();
    const Matrix& vv = v.value();
    Matrix* gq = q.requires_grad() ? &q.grad_buffer() : nullptr;
    Matrix* gk = k.requires_grad() ? &k.grad_buffer() : nullptr;
    Matrix* gv = v.requires_grad() ? &v.grad_buffer() : nullptr;

    std::vector<double> d_weight;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const std::size_t begin = csr.row_begin(i), end = csr.row_end(i);
      d_weight.assign(end - begin, 0.0);
      double weighted = 0.0;
      for (std::size_t p = begin; p < end; ++p) {
        const std::size_t j = csr.col_idx[p];
        const double factor = keep.empty() ? 1.0 : keep[p];
        double dw = 0.0;
        for (std::size_t c = 0; c < head_dim; ++c) dw += g(i, c) * vv(j, c);
        if (gv) {
          const double w = weights[p] * factor;
          for (std::size_t c = 0; c < head_dim; ++c) (*gv)(j, c) += w * g(i, c);
        }
        d_weight[p - begin] = dw * factor;
        weighted += weights[p] * d_weight[p - begin];
      }
      if (!gq && !gk) continue;
      for (std::size_t p = begin; p < end; ++p) {
        const std::size_t j = csr.col_idx[p];
        const double ds = weights[p] * (d_weight[p - begin] - weighted) * scale;
        if (gq) for (std::size_t c = 0; c < head_dim; ++c) (*gq)(i, c) += ds * kv(j, c);
        if (gk) for (std::size_t c = 0; c < head_dim; ++c) (*gk)(j, c) += ds * qv(i, c);
      }
    }
  });
}

}  // namespace hopformer::ag
