// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hopformer/autograd.hpp"
#include "hopformer/graph.hpp"
#include "hopformer/hop_mask.hpp"

namespace hopformer {

enum class Task { node_classification, graph_classification, graph_regression };
enum class Readout { mean, sum };
/// post: norm after each residual add (vanilla). pre: norm on sublayer input.
enum class NormPlacement { post, pre };

struct ModelConfig {
  std::size_t hidden_dim = 16;
  std::size_t num_heads = 4;
  std::vector<std::size_t> head_hops{1, 3, 6, 12};  // incidence hops, one per head
  std::size_t num_layers = 2;
  std::size_t ffn_dim = 32;
  double dropout = 0.0;
  double attention_dropout = 0.0;
  Task task = Task::node_classification;
  Readout readout = Readout::mean;
  std::size_t num_classes = 2;
  std::size_t output_dim = 1;  // regression only
  NormPlacement norm = NormPlacement::post;
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 0;

  std::size_t head_dim() const { return hidden_dim / num_heads; }
  /// Width of the task head output.
  std::size_t output_width() const {
    return task == Task::graph_regression ? output_dim : num_classes;
  }
  /// Throws InputError on: H not dividing d, hop list length != H, rates
  /// outside [0, 1), zero dimensions.
  void validate() const;
};

// Weights are stored input-major (in x out) so token rows multiply on the left.
struct HeadParams {
  ag::Tensor query;  // d x d_h
  ag::Tensor key;    // d x d_h
  ag::Tensor value;  // d x d_h
};

struct LayerParams {
  std::vector<HeadParams> heads;
  ag::Tensor out_proj;  // d x d
  ag::Tensor norm1_gamma, norm1_beta;
  ag::Tensor norm2_gamma, norm2_beta;
  ag::Tensor ffn_in, ffn_in_bias;    // d x f, 1 x f
  ag::Tensor ffn_out, ffn_out_bias;  // f x d, 1 x d
};

struct Model {
  ModelConfig config;
  std::size_t node_feature_dim = 0;
  std::size_t edge_feature_dim = 0;
  ag::Tensor node_proj;  // d_v x d, bias-free
  ag::Tensor edge_proj;  // d_e x d, bias-free; undefined when d_e == 0
  std::vector<LayerParams> layers;
  ag::Tensor head_weight;  // d x C
  ag::Tensor head_bias;    // 1 x C

  /// Every trainable tensor with a stable dotted name, in a fixed order.
  std::vector<std::pair<std::string, ag::Tensor>> named_parameters() const;
  std::vector<ag::Tensor> parameters() const;

  /// Deep copy: parameters do not alias.
  Model clone() const;
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);
};

/// Glorot-uniform weights, zero biases, unit gamma / zero beta. Bit-identical
/// for equal (cfg, seed, dims).
Model init_model(const ModelConfig& cfg, std::size_t node_feature_dim, std::size_t edge_feature_dim);

/// Per-layer record of intermediate head outputs (T x d_h each), filled
/// when requested through ForwardOptions.
struct LayerTrace {
  std::vector<Matrix> head_outputs;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  std::vector<LayerTrace>* trace = nullptr;
};

/// H0 = [node rows X W_n ; edge rows E W_e]; edge rows are zero when the
/// graph has no edge features.
ag::Tensor embed_tokens(ag::Tape& t, const Model& m, const Graph& g, const AugmentedGraph& ag);

/// One masked encoder layer; masks.size() must equal the head count.
ag::Tensor encoder_layer(ag::Tape& t, const ag::Tensor& z, const std::vector<HopMaskPtr>& masks,
                         const LayerParams& p, const ModelConfig& cfg,
                         const ForwardOptions& opts = {}, std::size_t layer_index = 0,
                         LayerTrace* trace = nullptr);

/// L encoder layers over precomputed token embeddings.
ag::Tensor encode(ag::Tape& t, const Model& m, const ag::Tensor& embeddings,
                  const std::vector<HopMaskPtr>& masks, const ForwardOptions& opts = {});

/// embed_tokens followed by encode.
ag::Tensor forward(ag::Tape& t, const Model& m, const Graph& g, const AugmentedGraph& ag,
                   const std::vector<HopMaskPtr>& masks, const ForwardOptions& opts = {});

/// Pools every token row (node and edge tokens) into 1 x d.
ag::Tensor readout(ag::Tape& t, const ag::Tensor& h, Readout mode);

/// Node logits N x C from the first num_nodes rows of h.
ag::Tensor predict_node(ag::Tape& t, const Model& m, const ag::Tensor& h, std::size_t num_nodes);
/// Graph logits 1 x C (or 1 x output_dim for regression) from a pooled row.
ag::Tensor predict_graph(ag::Tape& t, const Model& m, const ag::Tensor& pooled);

/// Row-wise argmax; ties resolve to the lowest column.
std::vector<std::size_t> argmax_rows(const Matrix& logits);

std::string to_string(Task task);
Task task_from_string(const std::string& s);

}  // namespace hopformer
