// SPDX-License-Identifier: Apache-2.0
#include "hopformer/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "hopformer/error.hpp"
#include "hopformer/rng.hpp"

namespace hopformer {
namespace {

std::string edge_name(std::size_t idx, const Edge& e) {
  return "edge " + std::to_string(idx) + " (" + std::to_string(e.first) + "," +
         std::to_string(e.second) + ")";
}

Edge normalized(Edge e) {
  if (e.first > e.second) std::swap(e.first, e.second);
  return e;
}

Graph with_unit_features(std::size_t n, std::vector<Edge> edges) {
  Graph g;
  g.num_nodes = n;
  g.edges = std::move(edges);
  g.node_features = Matrix(n, 1, 1.0);
  return g;
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw InputError(std::string(name) + " must lie in [0, 1], got " + std::to_string(p));
  }
}

}  // namespace

void validate(const Graph& g) {
  std::set<Edge> seen;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const Edge& e = g.edges[i];
    if (e.first >= g.num_nodes || e.second >= g.num_nodes) {
      throw InputError(edge_name(i, e) + " has an endpoint outside [0, " +
                       std::to_string(g.num_nodes) + ")");
    }
    if (e.first == e.second) throw InputError(edge_name(i, e) + " is a self-loop");
    if (!seen.insert(normalized(e)).second) throw InputError(edge_name(i, e) + " is a parallel edge");
  }
  if (g.node_features.rows() != g.num_nodes) {
    throw InputError("node_features has " + std::to_string(g.node_features.rows()) +
                     " rows but num_nodes is " + std::to_string(g.num_nodes));
  }
  if (g.edge_features && g.edge_features->rows() != g.edges.size()) {
    throw InputError("edge_features has " + std::to_string(g.edge_features->rows()) +
                     " rows but there are " + std::to_string(g.edges.size()) + " edges");
  }
  if (g.node_labels && g.node_labels->size() != g.num_nodes) {
    throw InputError("node_labels has " + std::to_string(g.node_labels->size()) +
                     " entries but num_nodes is " + std::to_string(g.num_nodes));
  }
}

std::vector<std::vector<std::size_t>> adjacency_lists(const Graph& g) {
  std::vector<std::vector<std::size_t>> adj(g.num_nodes);
  for (const auto& [u, v] : g.edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

bool CsrPattern::contains(std::size_t r, std::size_t c) const {
  auto first = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
  auto last = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
  return std::binary_search(first, last, c);
}

AugmentedGraph augment(const Graph& g) {
  validate(g);
  AugmentedGraph ag;
  ag.num_node_tokens = g.num_nodes;
  ag.num_edge_tokens = g.edges.size();
  const std::size_t total = ag.total_tokens();

  ag.token_kind.assign(total, TokenKind::edge);
  std::fill_n(ag.token_kind.begin(), g.num_nodes, TokenKind::node);
  ag.edge_token_origin = g.edges;

  // Node token rows list incident edge tokens; edge token rows list the two
  // endpoints. Edge tokens are numbered after nodes so sorting by index is
  // enough for the node rows, which are filled in increasing edge order.
  std::vector<std::vector<std::size_t>> rows(total);
  for (std::size_t j = 0; j < g.edges.size(); ++j) {
    const auto [u, v] = g.edges[j];
    const std::size_t e = ag.edge_token(j);
    rows[u].push_back(e);
    rows[v].push_back(e);
    rows[e] = {std::min(u, v), std::max(u, v)};
  }

  CsrPattern& csr = ag.adjacency;
  csr.dim = total;
  csr.row_ptr.assign(total + 1, 0);
  csr.col_idx.reserve(4 * g.edges.size());
  for (std::size_t r = 0; r < total; ++r) {
    csr.col_idx.insert(csr.col_idx.end(), rows[r].begin(), rows[r].end());
    csr.row_ptr[r + 1] = csr.col_idx.size();
  }
  return ag;
}

Graph generate_watts_strogatz(std::size_t n, std::size_t k, double beta, std::uint64_t seed) {
  if (k % 2 != 0) throw InputError("watts-strogatz: k must be even, got " + std::to_string(k));
  if (n <= k) {
    throw InputError("watts-strogatz: need n > k, got n=" + std::to_string(n) +
                     " k=" + std::to_string(k));
  }
  check_probability(beta, "watts-strogatz beta");

  std::vector<Edge> edges;
  std::set<Edge> present;
  std::vector<std::size_t> degree(n, k);
  for (std::size_t j = 1; j <= k / 2; ++j) {
    for (std::size_t u = 0; u < n; ++u) {
      Edge e{u, (u + j) % n};
      edges.push_back(e);
      present.insert(normalized(e));
    }
  }

  Rng rng(seed);
  // Rewire ring by ring, keeping the lattice-side endpoint u.
  for (std::size_t idx = 0; idx < edges.size(); ++idx) {
    if (!rng.bernoulli(beta)) continue;
    const std::size_t u = edges[idx].first;
    if (degree[u] >= n - 1) continue;
    std::size_t w;
    do {
      w = static_cast<std::size_t>(rng.below(n));
    } while (w == u || present.count(normalized({u, w})) != 0);
    const std::size_t old = edges[idx].second;
    present.erase(normalized(edges[idx]));
    present.insert(normalized({u, w}));
    --degree[old];
    ++degree[w];
    edges[idx].second = w;
  }
  return with_unit_features(n, std::move(edges));
}

Graph generate_erdos_renyi(std::size_t n, double p, std::uint64_t seed) {
  if (n < 1) throw InputError("erdos-renyi: need n >= 1");
  check_probability(p, "erdos-renyi p");
  Rng rng(seed);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
    }
  }
  return with_unit_features(n, std::move(edges));
}

Graph generate_sbm(const std::vector<std::size_t>& block_sizes, double p_in, double p_out,
                   std::uint64_t seed) {
  if (block_sizes.empty()) throw InputError("sbm: need at least one block");
  check_probability(p_in, "sbm p_in");
  check_probability(p_out, "sbm p_out");
  std::vector<int> block;
  for (std::size_t b = 0; b < block_sizes.size(); ++b) {
    block.insert(block.end(), block_sizes[b], static_cast<int>(b));
  }
  const std::size_t n = block.size();
  if (n < 1) throw InputError("sbm: blocks are empty");

  Rng rng(seed);
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (rng.bernoulli(block[u] == block[v] ? p_in : p_out)) edges.emplace_back(u, v);
    }
  }
  Graph g = with_unit_features(n, std::move(edges));
  g.node_labels = std::move(block);
  return g;
}

void attach_class_features(Graph& g, std::size_t dim, double signal, double noise,
                           std::uint64_t seed) {
  if (!g.node_labels) throw InputError("attach_class_features: graph has no node labels");
  if (dim == 0) throw InputError("attach_class_features: dim must be positive");
  const int num_classes = *std::max_element(g.node_labels->begin(), g.node_labels->end()) + 1;

  Rng rng(seed);
  Matrix means(static_cast<std::size_t>(num_classes), dim);
  for (std::size_t c = 0; c < means.rows(); ++c) {
    double norm = 0.0;
    for (double& x : means.row(c)) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : means.row(c)) x *= signal / norm;
  }

  g.node_features = Matrix(g.num_nodes, dim);
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    const auto c = static_cast<std::size_t>((*g.node_labels)[v]);
    for (std::size_t f = 0; f < dim; ++f) g.node_features(v, f) = means(c, f) + noise * rng.normal();
  }
}

}  // namespace hopformer
