// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hopformer/autograd.hpp"
#include "hopformer/graph.hpp"
#include "hopformer/hop_mask.hpp"
#include "hopformer/model.hpp"

namespace hopformer {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t early_stop_patience = 50;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;

  /// lr >= 0 and fractions summing to 1. epochs may be 0.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  double seconds = 0.0;
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;
  std::string metric_name;

  std::size_t size() const { return epochs.size(); }
};

/// Mean negative log-softmax of the labelled class over the selected rows.
/// An empty `selected` selects every row.
ag::Tensor cross_entropy(ag::Tape& t, const ag::Tensor& logits, const std::vector<int>& labels,
                         const std::vector<bool>& selected = {});

/// Mean absolute error between a column or row of predictions and targets.
/// Subgradient 0 at exact ties.
ag::Tensor mae(ag::Tape& t, const ag::Tensor& pred, const std::vector<double>& target);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
};

/// One Adam update with decoupled weight decay. Empty state is initialised to
/// zeros. Parameters without a gradient are treated as zero-gradient.
void adam_step(std::vector<ag::Tensor>& params, AdamState& state, const AdamOptions& opts);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

enum class SplitPart { train, val, test };

/// Seeded random permutation cut by fractions.
Split random_split(std::size_t n, const TrainConfig& cfg);

/// One graph, transductive split over node indices.
struct NodeDataset {
  Graph graph;
  AugmentedGraph augmented;
  std::vector<HopMaskPtr> masks;
  Split split;
};

struct GraphSample {
  Graph graph;
  AugmentedGraph augmented;
  std::vector<HopMaskPtr> masks;
};

struct GraphDataset {
  std::vector<GraphSample> samples;
  Split split;
};

/// Augments and builds masks once. Uses `split` when given, else random_split.
NodeDataset prepare_node_dataset(Graph g, const std::vector<std::size_t>& head_hops,
                                 const TrainConfig& cfg, std::optional<Split> split = {});
GraphDataset prepare_graph_dataset(std::vector<Graph> graphs,
                                   const std::vector<std::size_t>& head_hops,
                                   const TrainConfig& cfg, std::optional<Split> split = {});

struct Metrics {
  std::string name;  // "accuracy" or "mae"
  double value = 0.0;
  std::size_t count = 0;
};

Metrics evaluate(const Model& m, const NodeDataset& ds, SplitPart part);
Metrics evaluate(const Model& m, const GraphDataset& ds, SplitPart part);
/// Evaluates an explicit list of graph indices.
Metrics evaluate(const Model& m, const GraphDataset& ds, const std::vector<std::size_t>& indices);

struct TrainResult {
  Model model;
  RunHistory history;
};

/// Full-batch training over the train split for node tasks; shuffled
/// mini-batches of graphs for graph tasks. Returns the parameters of the best
/// validation epoch. Throws RuntimeAbort on a non-finite loss.
/// `record_time` = false writes 0 to every seconds field.
TrainResult train(const Model& init, const NodeDataset& ds, const TrainConfig& cfg,
                  bool record_time = true);
TrainResult train(const Model& init, const GraphDataset& ds, const TrainConfig& cfg,
                  bool record_time = true);

}  // namespace hopformer
