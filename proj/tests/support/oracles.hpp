// SPDX-License-Identifier: Apache-2.0
// Dense reference implementations used as test oracles. Each one is written
// directly from the definition with plain loops and shares no code with the
// sparse library paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "hopformer/graph.hpp"
#include "hopformer/hop_mask.hpp"
#include "hopformer/matrix.hpp"
#include "hopformer/model.hpp"
#include "hopformer/rng.hpp"

namespace hopformer::oracle {

using BoolMatrix = std::vector<std::vector<bool>>;

/// Dense T x T 0/1 adjacency of the augmented graph, rebuilt from the edge
/// list rather than from the CSR.
inline BoolMatrix dense_incidence(const Graph& g) {
  const std::size_t n = g.num_nodes, t = g.num_nodes + g.edges.size();
  BoolMatrix a(t, std::vector<bool>(t, false));
  for (std::size_t j = 0; j < g.edges.size(); ++j) {
    const auto [u, v] = g.edges[j];
    a[u][n + j] = a[n + j][u] = true;
    a[v][n + j] = a[n + j][v] = true;
  }
  return a;
}

/// 1[sum_{k=0..n} A^k > 0] by repeated boolean matrix products.
inline BoolMatrix dense_reachability(const BoolMatrix& a, std::size_t n) {
  const std::size_t t = a.size();
  BoolMatrix power(t, std::vector<bool>(t, false));
  for (std::size_t i = 0; i < t; ++i) power[i][i] = true;
  BoolMatrix reach = power;
  for (std::size_t k = 1; k <= n; ++k) {
    BoolMatrix next(t, std::vector<bool>(t, false));
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t m = 0; m < t; ++m) {
        if (!power[i][m]) continue;
        for (std::size_t j = 0; j < t; ++j) {
          if (a[m][j]) next[i][j] = true;
        }
      }
    }
    power = std::move(next);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        if (power[i][j]) reach[i][j] = true;
      }
    }
  }
  return reach;
}

inline BoolMatrix full_support(std::size_t t) { return BoolMatrix(t, std::vector<bool>(t, true)); }

/// All-ones T x T mask, including for graphs where no hop budget reaches it.
inline HopMaskPtr full_mask(std::size_t t) {
  auto m = std::make_shared<HopMask>();
  m->pattern.dim = t;
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < t; ++c) m->pattern.col_idx.push_back(c);
    m->pattern.row_ptr.push_back(m->pattern.col_idx.size());
  }
  return m;
}

/// Full score matrix, -inf off the support, row softmax, weighted sum.
inline Matrix masked_dense_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                     const BoolMatrix& support, Matrix* weights = nullptr) {
  const std::size_t t = q.rows(), dh = q.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Matrix s(t, t);
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < dh; ++c) dot += q(i, c) * k(j, c);
      s(i, j) = support[i][j] ? dot * scale : neg_inf;
    }
  }
  Matrix alpha(t, t);
  for (std::size_t i = 0; i < t; ++i) {
    double mx = neg_inf;
    for (std::size_t j = 0; j < t; ++j) mx = std::max(mx, s(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < t; ++j) z += std::exp(s(i, j) - mx);
    for (std::size_t j = 0; j < t; ++j) alpha(i, j) = std::exp(s(i, j) - mx) / z;
  }
  Matrix out(t, v.cols());
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += alpha(i, j) * v(j, c);
    }
  }
  if (weights) *weights = alpha;
  return out;
}

inline Matrix dense_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t m = 0; m < a.cols(); ++m) {
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += a(i, m) * b(m, j);
    }
  }
  return out;
}

inline Matrix dense_layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, double eps) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(r, c) = (x(r, c) - mean) / std::sqrt(var + eps) * gamma(0, c) + beta(0, c);
    }
  }
  return out;
}

/// Textbook unmasked Transformer encoder layer (post-norm or pre-norm) read
/// from the model's parameter values.
inline Matrix vanilla_encoder_layer(const Matrix& z, const LayerParams& p, const ModelConfig& cfg) {
  const bool pre = cfg.norm == NormPlacement::pre;
  const double eps = cfg.layer_norm_eps;
  const std::size_t t = z.rows(), d = z.cols(), dh = cfg.head_dim();
  const Matrix x = pre ? dense_layer_norm(z, p.norm1_gamma.value(), p.norm1_beta.value(), eps) : z;
  Matrix cat(t, d);
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const Matrix q = dense_matmul(x, p.heads[h].query.value());
    const Matrix k = dense_matmul(x, p.heads[h].key.value());
    const Matrix v = dense_matmul(x, p.heads[h].value.value());
    const Matrix o = masked_dense_attention(q, k, v, full_support(t));
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < dh; ++c) cat(i, h * dh + c) = o(i, c);
    }
  }
  Matrix mid = dense_matmul(cat, p.out_proj.value());
  for (std::size_t i = 0; i < mid.size(); ++i) mid.data()[i] += z.data()[i];
  if (!pre) mid = dense_layer_norm(mid, p.norm1_gamma.value(), p.norm1_beta.value(), eps);

  const Matrix y = pre ? dense_layer_norm(mid, p.norm2_gamma.value(), p.norm2_beta.value(), eps) : mid;
  Matrix hidden = dense_matmul(y, p.ffn_in.value());
  for (std::size_t i = 0; i < hidden.rows(); ++i) {
    for (std::size_t c = 0; c < hidden.cols(); ++c) {
      hidden(i, c) = std::max(0.0, hidden(i, c) + p.ffn_in_bias.value()(0, c));
    }
  }
  Matrix out = dense_matmul(hidden, p.ffn_out.value());
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(i, c) += p.ffn_out_bias.value()(0, c) + mid(i, c);
    }
  }
  if (!pre) out = dense_layer_norm(out, p.norm2_gamma.value(), p.norm2_beta.value(), eps);
  return out;
}

/// Token embeddings built directly from graph features and projector values.
inline Matrix vanilla_embeddings(const Model& m, const Graph& g) {
  const std::size_t n = g.num_nodes, t = n + g.edges.size(), d = m.config.hidden_dim;
  Matrix h(t, d);
  const Matrix hn = dense_matmul(g.node_features, m.node_proj.value());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) h(i, c) = hn(i, c);
  }
  if (g.edge_features && m.edge_proj.defined()) {
    const Matrix he = dense_matmul(*g.edge_features, m.edge_proj.value());
    for (std::size_t j = 0; j < g.edges.size(); ++j) {
      for (std::size_t c = 0; c < d; ++c) h(n + j, c) = he(j, c);
    }
  }
  return h;
}

inline Matrix vanilla_forward(const Model& m, const Graph& g) {
  Matrix z = vanilla_embeddings(m, g);
  for (const LayerParams& p : m.layers) z = vanilla_encoder_layer(z, p, m.config);
  return z;
}

// ---- small-world brute force on the original graph ----

inline BoolMatrix dense_adjacency(const Graph& g) {
  BoolMatrix a(g.num_nodes, std::vector<bool>(g.num_nodes, false));
  for (const auto& [u, v] : g.edges) a[u][v] = a[v][u] = true;
  return a;
}

inline double brute_clustering(const Graph& g) {
  const BoolMatrix a = dense_adjacency(g);
  const std::size_t n = g.num_nodes;
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<std::size_t> nb;
    for (std::size_t u = 0; u < n; ++u) {
      if (a[v][u]) nb.push_back(u);
    }
    const double deg = static_cast<double>(nb.size());
    if (nb.size() < 2) continue;
    double links = 0.0;
    for (std::size_t x = 0; x < nb.size(); ++x) {
      for (std::size_t y = x + 1; y < nb.size(); ++y) links += a[nb[x]][nb[y]] ? 1.0 : 0.0;
    }
    total += 2.0 * links / (deg * (deg - 1.0));
  }
  return total / static_cast<double>(n);
}

/// Floyd-Warshall mean over reachable ordered pairs; 0 when none.
inline double brute_path_length(const Graph& g) {
  const std::size_t n = g.num_nodes;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, inf));
  for (std::size_t i = 0; i < n; ++i) d[i][i] = 0.0;
  for (const auto& [u, v] : g.edges) d[u][v] = d[v][u] = 1.0;
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][m] + d[m][j]);
    }
  }
  double total = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && d[i][j] < inf) {
        total += d[i][j];
        pairs += 1.0;
      }
    }
  }
  return pairs == 0.0 ? 0.0 : total / pairs;
}

// ---- fixtures ----

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (double& x : m.data()) x = rng.uniform(-scale, scale);
  return m;
}

/// Random simple graph with `n` nodes, each pair present with probability p,
/// random node features and optional random edge features.
inline Graph random_graph(Rng& rng, std::size_t n, double p, std::size_t d_v = 3,
                          std::size_t d_e = 0) {
  Graph g;
  g.num_nodes = n;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (rng.bernoulli(p)) g.edges.emplace_back(u, v);
    }
  }
  g.node_features = random_matrix(rng, n, d_v);
  if (d_e > 0) g.edge_features = random_matrix(rng, g.edges.size(), d_e);
  return g;
}

/// Random graph whose augmented token count N + M is at most max_tokens.
inline Graph random_graph_max_tokens(Rng& rng, std::size_t max_tokens, std::size_t d_v = 3,
                                     std::size_t d_e = 0) {
  for (;;) {
    const std::size_t n = 1 + rng.below(std::min<std::size_t>(max_tokens, 16));
    const double p = rng.uniform(0.0, 0.6);
    Graph g = random_graph(rng, n, p, d_v, d_e);
    if (g.num_nodes + g.edges.size() <= max_tokens) return g;
  }
}

/// Relabels node v as perm[v]; edges are reordered by a second permutation so
/// edge tokens are relabeled consistently.
inline Graph permute_graph(const Graph& g, const std::vector<std::size_t>& node_perm,
                           const std::vector<std::size_t>& edge_perm) {
  Graph out;
  out.num_nodes = g.num_nodes;
  out.node_features = Matrix(g.num_nodes, g.node_features.cols());
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    for (std::size_t c = 0; c < g.node_features.cols(); ++c) {
      out.node_features(node_perm[v], c) = g.node_features(v, c);
    }
  }
  out.edges.resize(g.edges.size());
  if (g.edge_features) out.edge_features = Matrix(g.edges.size(), g.edge_features->cols());
  for (std::size_t j = 0; j < g.edges.size(); ++j) {
    const auto [u, v] = g.edges[j];
    out.edges[edge_perm[j]] = {node_perm[u], node_perm[v]};
    if (g.edge_features) {
      for (std::size_t c = 0; c < g.edge_features->cols(); ++c) {
        (*out.edge_features)(edge_perm[j], c) = (*g.edge_features)(j, c);
      }
    }
  }
  if (g.node_labels) {
    std::vector<int> labels(g.num_nodes);
    for (std::size_t v = 0; v < g.num_nodes; ++v) labels[node_perm[v]] = (*g.node_labels)[v];
    out.node_labels = labels;
  }
  out.graph_label = g.graph_label;
  return out;
}

inline std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

inline Graph path_graph(std::size_t n, std::size_t d_v = 1) {
  Graph g;
  g.num_nodes = n;
  for (std::size_t i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
  g.node_features = Matrix(n, d_v, 1.0);
  return g;
}

inline Graph triangle() {
  Graph g;
  g.num_nodes = 3;
  g.edges = {{0, 1}, {1, 2}, {0, 2}};
  g.node_features = Matrix(3, 1, 1.0);
  return g;
}

inline Graph star(std::size_t leaves) {
  Graph g;
  g.num_nodes = leaves + 1;
  for (std::size_t i = 1; i <= leaves; ++i) g.edges.emplace_back(0, i);
  g.node_features = Matrix(leaves + 1, 1, 1.0);
  return g;
}

}  // namespace hopformer::oracle
