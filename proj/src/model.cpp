// SPDX-License-Identifier: Apache-2.0
#include "hopformer/model.hpp"

#include <cmath>
#include <string>

#include "hopformer/attention.hpp"
#include "hopformer/error.hpp"
#include "hopformer/rng.hpp"

namespace hopformer {
namespace {

using ag::Tape;
using ag::Tensor;

template <typename ModelT, typename Fn>
void visit_parameters(ModelT& m, Fn&& fn) {
  fn(std::string("node_proj"), m.node_proj);
  if (m.edge_proj.defined()) fn(std::string("edge_proj"), m.edge_proj);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& layer = m.layers[l];
    const std::string prefix = "layers." + std::to_string(l) + ".";
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      const std::string hp = prefix + "heads." + std::to_string(h) + ".";
      fn(hp + "query", layer.heads[h].query);
      fn(hp + "key", layer.heads[h].key);
      fn(hp + "value", layer.heads[h].value);
    }
    fn(prefix + "out_proj", layer.out_proj);
    fn(prefix + "norm1.gamma", layer.norm1_gamma);
    fn(prefix + "norm1.beta", layer.norm1_beta);
    fn(prefix + "norm2.gamma", layer.norm2_gamma);
    fn(prefix + "norm2.beta", layer.norm2_beta);
    fn(prefix + "ffn.in", layer.ffn_in);
    fn(prefix + "ffn.in_bias", layer.ffn_in_bias);
    fn(prefix + "ffn.out", layer.ffn_out);
    fn(prefix + "ffn.out_bias", layer.ffn_out_bias);
  }
  fn(std::string("head.weight"), m.head_weight);
  fn(std::string("head.bias"), m.head_bias);
}

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (double& x : w.data()) x = rng.uniform(-limit, limit);
  return Tensor::parameter(std::move(w));
}

Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor::parameter(Matrix(rows, cols)); }
Tensor ones(std::size_t rows, std::size_t cols) { return Tensor::parameter(Matrix(rows, cols, 1.0)); }

void check_rate(double r, const char* name) {
  if (!(r >= 0.0 && r < 1.0)) throw InputError(std::string(name) + " must lie in [0, 1)");
}

}  // namespace

void ModelConfig::validate() const {
  if (hidden_dim == 0) throw InputError("hidden_dim must be positive");
  if (num_heads == 0) throw InputError("num_heads must be positive");
  if (hidden_dim % num_heads != 0) {
    throw InputError("num_heads (" + std::to_string(num_heads) + ") must divide hidden_dim (" +
                     std::to_string(hidden_dim) + ")");
  }
  if (head_hops.size() != num_heads) {
    throw InputError("head_hops has " + std::to_string(head_hops.size()) +
                     " entries but num_heads is " + std::to_string(num_heads));
  }
  if (ffn_dim == 0) throw InputError("ffn_dim must be positive");
  check_rate(dropout, "dropout");
  check_rate(attention_dropout, "attention_dropout");
  if (task == Task::graph_regression ? output_dim == 0 : num_classes == 0) {
    throw InputError("task head needs a positive output width");
  }
  if (!(layer_norm_eps > 0.0)) throw InputError("layer_norm_eps must be positive");
}

std::vector<std::pair<std::string, Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  visit_parameters(*this, [&](const std::string& name, const Tensor& t) { out.emplace_back(name, t); });
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  visit_parameters(*this, [&](const std::string&, const Tensor& t) { out.push_back(t); });
  return out;
}

Model Model::clone() const {
  Model copy = *this;
  visit_parameters(copy, [](const std::string&, Tensor& t) { t = Tensor::parameter(t.value()); });
  return copy;
}

std::vector<Matrix> Model::snapshot() const {
  std::vector<Matrix> out;
  visit_parameters(*this, [&](const std::string&, const Tensor& t) { out.push_back(t.value()); });
  return out;
}

void Model::restore(const std::vector<Matrix>& values) {
  std::size_t i = 0;
  visit_parameters(*this, [&](const std::string& name, Tensor& t) {
    if (i >= values.size() || !values[i].same_shape(t.value())) {
      throw InputError("restore: parameter '" + name + "' missing or mis-shaped");
    }
    t.mutable_value() = values[i++];
  });
  if (i != values.size()) throw InputError("restore: too many parameter arrays");
}

Model init_model(const ModelConfig& cfg, std::size_t node_feature_dim, std::size_t edge_feature_dim) {
  cfg.validate();
  if (node_feature_dim == 0) throw InputError("node feature dimension must be positive");
  const std::size_t d = cfg.hidden_dim;
  const std::size_t dh = cfg.head_dim();

  Rng rng(cfg.seed);
  Model m;
  m.config = cfg;
  m.node_feature_dim = node_feature_dim;
  m.edge_feature_dim = edge_feature_dim;
  m.node_proj = glorot(rng, node_feature_dim, d);
  if (edge_feature_dim > 0) m.edge_proj = glorot(rng, edge_feature_dim, d);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    LayerParams p;
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      HeadParams head;
      head.query = glorot(rng, d, dh);
      head.key = glorot(rng, d, dh);
      head.value = glorot(rng, d, dh);
      p.heads.push_back(std::move(head));
    }
    p.out_proj = glorot(rng, d, d);
    p.norm1_gamma = ones(1, d);
    p.norm1_beta = zeros(1, d);
    p.norm2_gamma = ones(1, d);
    p.norm2_beta = zeros(1, d);
    p.ffn_in = glorot(rng, d, cfg.ffn_dim);
    p.ffn_in_bias = zeros(1, cfg.ffn_dim);
    p.ffn_out = glorot(rng, cfg.ffn_dim, d);
    p.ffn_out_bias = zeros(1, d);
    m.layers.push_back(std::move(p));
  }
  m.head_weight = glorot(rng, d, cfg.output_width());
  m.head_bias = zeros(1, cfg.output_width());
  return m;
}

Tensor embed_tokens(Tape& t, const Model& m, const Graph& g, const AugmentedGraph& ag) {
  if (ag.num_node_tokens != g.num_nodes || ag.num_edge_tokens != g.num_edges()) {
    throw InputError("augmented graph does not belong to this graph");
  }
  if (g.node_feature_dim() != m.node_feature_dim) {
    throw InputError("node features have dimension " + std::to_string(g.node_feature_dim()) +
                     " but the node projector expects " + std::to_string(m.node_feature_dim));
  }
  if (g.edge_features && g.edge_feature_dim() != m.edge_feature_dim) {
    throw InputError("edge features have dimension " + std::to_string(g.edge_feature_dim()) +
                     " but the edge projector expects " + std::to_string(m.edge_feature_dim));
  }
  const std::size_t d = m.config.hidden_dim;
  Tensor nodes = ag::matmul(t, Tensor::constant(g.node_features), m.node_proj);
  if (g.num_edges() == 0) return nodes;
  Tensor edges = g.edge_features ? ag::matmul(t, Tensor::constant(*g.edge_features), m.edge_proj)
                                 : Tensor::constant(Matrix(g.num_edges(), d));
  return ag::concat_rows(t, {nodes, edges});
}

Tensor encoder_layer(Tape& t, const Tensor& z, const std::vector<HopMaskPtr>& masks,
                     const LayerParams& p, const ModelConfig& cfg, const ForwardOptions& opts,
                     std::size_t layer_index, LayerTrace* trace) {
  if (masks.size() != p.heads.size()) {
    throw InputError("encoder_layer: " + std::to_string(masks.size()) + " masks for " +
                     std::to_string(p.heads.size()) + " heads");
  }
  if (z.cols() != cfg.hidden_dim) {
    throw ShapeError("encoder_layer: input " + z.value().shape_string() + " but hidden_dim is " +
                     std::to_string(cfg.hidden_dim));
  }
  const bool pre = cfg.norm == NormPlacement::pre;
  const double eps = cfg.layer_norm_eps;
  auto site_seed = [&](std::uint64_t site) {
    return derive_seed(opts.dropout_seed, layer_index * 1024 + site);
  };

  const Tensor attn_in = pre ? ag::layer_norm(t, z, p.norm1_gamma, p.norm1_beta, eps) : z;
  std::vector<Tensor> head_out;
  head_out.reserve(p.heads.size());
  for (std::size_t h = 0; h < p.heads.size(); ++h) {
    const Tensor q = ag::matmul(t, attn_in, p.heads[h].query);
    const Tensor k = ag::matmul(t, attn_in, p.heads[h].key);
    const Tensor v = ag::matmul(t, attn_in, p.heads[h].value);
    ag::AttentionOptions ao{cfg.attention_dropout, site_seed(16 + h), opts.training};
    head_out.push_back(ag::sparse_masked_attention(t, q, k, v, masks[h], ao));
    if (trace) trace->head_outputs.push_back(head_out.back().value());
  }
  const Tensor heads = head_out.size() == 1 ? head_out.front() : ag::concat_cols(t, head_out);
  Tensor attn = ag::matmul(t, heads, p.out_proj);
  attn = ag::dropout(t, attn, cfg.dropout, site_seed(1), opts.training);

  Tensor mid = ag::add(t, z, attn);
  if (!pre) mid = ag::layer_norm(t, mid, p.norm1_gamma, p.norm1_beta, eps);

  const Tensor ffn_in = pre ? ag::layer_norm(t, mid, p.norm2_gamma, p.norm2_beta, eps) : mid;
  Tensor hidden = ag::relu(t, ag::add_bias(t, ag::matmul(t, ffn_in, p.ffn_in), p.ffn_in_bias));
  Tensor ffn = ag::add_bias(t, ag::matmul(t, hidden, p.ffn_out), p.ffn_out_bias);
  ffn = ag::dropout(t, ffn, cfg.dropout, site_seed(2), opts.training);

  Tensor out = ag::add(t, mid, ffn);
  if (!pre) out = ag::layer_norm(t, out, p.norm2_gamma, p.norm2_beta, eps);
  return out;
}

Tensor encode(Tape& t, const Model& m, const Tensor& embeddings, const std::vector<HopMaskPtr>& masks,
              const ForwardOptions& opts) {
  if (masks.size() != m.config.num_heads) {
    throw InputError("expected " + std::to_string(m.config.num_heads) + " head masks, got " +
                     std::to_string(masks.size()));
  }
  for (const auto& mask : masks) {
    if (!mask || mask->dim() != embeddings.rows()) {
      throw InputError("head mask dimension does not match the token count " +
                       std::to_string(embeddings.rows()));
    }
  }
  if (opts.trace) opts.trace->assign(m.layers.size(), LayerTrace{});
  Tensor z = embeddings;
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    z = encoder_layer(t, z, masks, m.layers[l], m.config, opts, l,
                      opts.trace ? &(*opts.trace)[l] : nullptr);
  }
  return z;
}

Tensor forward(Tape& t, const Model& m, const Graph& g, const AugmentedGraph& ag,
               const std::vector<HopMaskPtr>& masks, const ForwardOptions& opts) {
  return encode(t, m, embed_tokens(t, m, g, ag), masks, opts);
}

Tensor readout(Tape& t, const Tensor& h, Readout mode) {
  if (h.rows() == 0) throw ShapeError("readout: no tokens");
  return mode == Readout::sum ? ag::sum_rows(t, h) : ag::mean_rows(t, h);
}

Tensor predict_node(Tape& t, const Model& m, const Tensor& h, std::size_t num_nodes) {
  if (m.config.task != Task::node_classification) {
    throw InputError("predict_node requires a node_classification model, got " + to_string(m.config.task));
  }
  const Tensor nodes = ag::slice_rows(t, h, 0, num_nodes);
  return ag::add_bias(t, ag::matmul(t, nodes, m.head_weight), m.head_bias);
}

Tensor predict_graph(Tape& t, const Model& m, const Tensor& pooled) {
  if (m.config.task == Task::node_classification) {
    throw InputError("predict_graph requires a graph-level model");
  }
  return ag::add_bias(t, ag::matmul(t, pooled, m.head_weight), m.head_bias);
}

std::vector<std::size_t> argmax_rows(const Matrix& logits) {
  std::vector<std::size_t> out(logits.rows(), 0);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, out[r])) out[r] = c;
    }
  }
  return out;
}

std::string to_string(Task task) {
  switch (task) {
    case Task::node_classification: return "node_classification";
    case Task::graph_classification: return "graph_classification";
    case Task::graph_regression: return "graph_regression";
  }
  return "unknown";
}

Task task_from_string(const std::string& s) {
  if (s == "node_classification") return Task::node_classification;
  if (s == "graph_classification") return Task::graph_classification;
  if (s == "graph_regression") return Task::graph_regression;
  throw InputError("unknown task '" + s + "'");
}

}  // namespace hopformer
