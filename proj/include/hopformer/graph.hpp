// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "hopformer/matrix.hpp"

namespace hopformer {

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected input graph with node features and optional edge features.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;
  Matrix node_features;                  // N x d_v
  std::optional<Matrix> edge_features;   // M x d_e
  std::optional<std::vector<int>> node_labels;
  std::optional<double> graph_label;

  std::size_t num_edges() const { return edges.size(); }
  std::size_t node_feature_dim() const { return node_features.cols(); }
  std::size_t edge_feature_dim() const { return edge_features ? edge_features->cols() : 0; }
};

/// Throws InputError naming the first violated invariant (offending edge or
/// mismatched dimension).
void validate(const Graph& g);

/// Neighbour lists of the original graph, sorted ascending.
std::vector<std::vector<std::size_t>> adjacency_lists(const Graph& g);

/// Compressed sparse row boolean pattern. Columns within a row are sorted.
struct CsrPattern {
  std::size_t dim = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;

  std::size_t nnz() const { return col_idx.size(); }
  std::size_t row_begin(std::size_t r) const { return row_ptr[r]; }
  std::size_t row_end(std::size_t r) const { return row_ptr[r + 1]; }
  std::size_t row_degree(std::size_t r) const { return row_ptr[r + 1] - row_ptr[r]; }
  bool contains(std::size_t r, std::size_t c) const;

  bool operator==(const CsrPattern&) const = default;
};

enum class TokenKind : std::uint8_t { node, edge };

/// Incidence-expanded token graph: token i < N is node i, token N + j is
/// edge j, and each edge token links to its two endpoints in both directions.
struct AugmentedGraph {
  std::size_t num_node_tokens = 0;
  std::size_t num_edge_tokens = 0;
  CsrPattern adjacency;
  std::vector<TokenKind> token_kind;
  std::vector<Edge> edge_token_origin;

  std::size_t total_tokens() const { return num_node_tokens + num_edge_tokens; }
  std::size_t edge_token(std::size_t edge_index) const { return num_node_tokens + edge_index; }
};

AugmentedGraph augment(const Graph& g);

/// Ring lattice of n nodes, each joined to its k nearest neighbours, then
/// each lattice edge rewired with probability beta. Unit scalar node features.
Graph generate_watts_strogatz(std::size_t n, std::size_t k, double beta, std::uint64_t seed);

/// G(n, p). Unit scalar node features.
Graph generate_erdos_renyi(std::size_t n, double p, std::uint64_t seed);

/// Stochastic block model. Node labels are block indices; unit scalar node
/// features unless replaced with attach_class_features.
Graph generate_sbm(const std::vector<std::size_t>& block_sizes, double p_in, double p_out,
                   std::uint64_t seed);

/// Replaces node features with noisy class-conditional Gaussians: each class
/// c gets a random mean direction scaled by `signal`, plus N(0, noise^2)
/// per coordinate. Requires node labels.
void attach_class_features(Graph& g, std::size_t dim, double signal, double noise,
                           std::uint64_t seed);

}  // namespace hopformer
