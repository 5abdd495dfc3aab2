// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "hopformer/flops.hpp"
#include "hopformer/graph.hpp"
#include "hopformer/hop_mask.hpp"
#include "hopformer/model.hpp"

namespace hopformer {

// ---- small-world measures (original graph, not the augmented one) ----

/// Mean local clustering; nodes of degree < 2 contribute 0.
double clustering_coefficient(const Graph& g);

/// Mean BFS distance over reachable ordered pairs u != v. 0 when no pair is
/// reachable. Throws InputError for graphs with fewer than 2 nodes.
double avg_shortest_path(const Graph& g);

struct SmallWorldReport {
  double clustering = 0.0;
  double avg_path_length = 0.0;
  std::size_t num_components = 0;
  std::size_t diameter_of_largest_component = 0;
};

SmallWorldReport small_world_report(const Graph& g);

struct DatasetSmallWorld {
  double mean_clustering = 0.0;
  double mean_path_length = 0.0;
  std::vector<SmallWorldReport> per_graph;
};

/// Unweighted means of per-graph values. Throws InputError on an empty list.
DatasetSmallWorld dataset_small_world(const std::vector<Graph>& graphs);

void write_small_world_csv(std::ostream& os, const std::vector<Graph>& graphs,
                           const DatasetSmallWorld& report);

// ---- receptive-field probing ----

enum class Perturbation { zero, shift };

struct ProbeTarget {
  /// Empty: probe the full encoder output row. Otherwise the given head's
  /// attention output in the first layer.
  std::optional<std::size_t> head;
};

/// Tokens j whose perturbation (at the encoder input) changes row i of the
/// probed output in any bit. Dropout is off.
std::vector<std::size_t> receptive_field_probe(const Model& m, const Matrix& embeddings,
                                               const std::vector<HopMaskPtr>& masks,
                                               std::size_t token, ProbeTarget target = {},
                                               Perturbation how = Perturbation::shift);

/// influenced[i] = every j that changes row i; one forward per token j.
std::vector<std::vector<std::size_t>> receptive_field_all(const Model& m, const Matrix& embeddings,
                                                          const std::vector<HopMaskPtr>& masks,
                                                          ProbeTarget target = {},
                                                          Perturbation how = Perturbation::shift);

// ---- FLOP accounting ----

/// Analytic forward cost through the encoder (projectors + L layers; the task
/// head is excluded). `head_nnz[h]` is nnz of head h's mask; masks repeat in
/// every layer.
FlopTally flop_count(const ModelConfig& cfg, const std::vector<std::size_t>& head_nnz,
                     std::size_t num_nodes, std::size_t num_edges, std::size_t node_feature_dim,
                     std::size_t edge_feature_dim);

FlopTally flop_count(const ModelConfig& cfg, const std::vector<HopMaskPtr>& masks,
                     const AugmentedGraph& ag, std::size_t node_feature_dim,
                     std::size_t edge_feature_dim);

struct FlopRow {
  std::size_t graph_index = 0;
  std::vector<std::size_t> head_hops;
  std::size_t total_nnz = 0;
  FlopTally analytic;
  FlopTally counted;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Least squares y = slope * x + intercept. Throws InputError when all x
/// are equal or fewer than 2 points.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct FlopReport {
  std::vector<FlopRow> rows;
  std::vector<LinearFit> per_graph_total;  // total FLOPs vs total nnz, per graph
  LinearFit pooled_total;
  LinearFit pooled_attention;
  /// Counted attention FLOPs equal the analytic ones on every row.
  bool attention_counts_agree = false;
};

/// Runs one metered forward per (graph, hop config), using `cfg` with its
/// head_hops replaced. Needs >= 3 hop configs.
FlopReport flops_vs_nnz_report(const std::vector<Graph>& graphs,
                               const std::vector<std::vector<std::size_t>>& hop_configs,
                               const ModelConfig& cfg);

void write_flop_csv(std::ostream& os, const FlopReport& report);

}  // namespace hopformer
