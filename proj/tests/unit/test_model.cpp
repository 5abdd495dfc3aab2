// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>

#include "hopformer/analysis.hpp"
#include "hopformer/error.hpp"
#include "hopformer/model.hpp"
#include "oracles.hpp"

using namespace hopformer;
using ag::Tape;
using ag::Tensor;

namespace {

ModelConfig small_config(std::size_t d = 8, std::size_t heads = 2, std::vector<std::size_t> hops = {1, 3}) {
  ModelConfig cfg;
  cfg.hidden_dim = d;
  cfg.num_heads = heads;
  cfg.head_hops = std::move(hops);
  cfg.num_layers = 1;
  cfg.ffn_dim = 12;
  return cfg;
}

Matrix run_forward(const Model& m, const Graph& g, const std::vector<std::size_t>& hops,
                   const ForwardOptions& opts = {}) {
  const AugmentedGraph ag = augment(g);
  Tape t;
  return forward(t, m, g, ag, build_head_masks(ag, hops), opts).value();
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

std::size_t augmented_diameter(const AugmentedGraph& ag) {
  std::size_t diameter = 0;
  for (std::size_t i = 0; i < ag.total_tokens(); ++i) {
    for (std::size_t d : incidence_distances(ag, i)) {
      if (d != SIZE_MAX) diameter = std::max(diameter, d);
    }
  }
  return diameter;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = small_config(8, 4, {1, 3, 6, 12});
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.head_dim() == 2);
  CHECK(init_model(cfg, 3, 0).layers[0].heads[0].query.value().cols() == 2);

  cfg.hidden_dim = 10;
  CHECK_THROWS_AS(init_model(cfg, 3, 0), InputError);
  cfg.hidden_dim = 8;
  cfg.head_hops = {1, 3};
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg.head_hops = {1, 3, 6, 12};
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg.dropout = 0.0;
  cfg.attention_dropout = -0.1;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("initialization is deterministic and seed dependent") {
  const ModelConfig cfg = small_config();
  const Model a = init_model(cfg, 3, 2);
  const Model b = init_model(cfg, 3, 2);
  CHECK(a.snapshot() == b.snapshot());
  ModelConfig other = cfg;
  other.seed = 1;
  CHECK(init_model(other, 3, 2).snapshot() != a.snapshot());

  for (const auto& [name, p] : a.named_parameters()) {
    if (name.find("bias") != std::string::npos || name.find("beta") != std::string::npos) {
      CHECK(p.value() == Matrix(p.rows(), p.cols()));
    } else if (name.find("gamma") != std::string::npos) {
      CHECK(p.value() == Matrix(p.rows(), p.cols(), 1.0));
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(p.rows() + p.cols()));
      for (double x : p.value().data()) CHECK(std::abs(x) <= limit);
    }
  }
  CHECK_FALSE(init_model(cfg, 3, 0).edge_proj.defined());
}

TEST_CASE("clone does not alias") {
  const Model a = init_model(small_config(), 2, 0);
  Model b = a.clone();
  b.node_proj.mutable_value()(0, 0) += 1.0;
  CHECK(a.node_proj.value()(0, 0) != b.node_proj.value()(0, 0));
}

TEST_CASE("token embeddings") {
  Rng rng(1);
  ModelConfig cfg = small_config(4, 2, {1, 1});
  Model m = init_model(cfg, 4, 0);
  m.node_proj.mutable_value() = Matrix::identity(4);
  const Graph g = oracle::random_graph(rng, 6, 0.5, 4);
  const AugmentedGraph ag = augment(g);
  Tape t;
  const Matrix h = embed_tokens(t, m, g, ag).value();
  REQUIRE(h.rows() == ag.total_tokens());
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(h(i, c) == g.node_features(i, c));
  }
  for (std::size_t i = g.num_nodes; i < h.rows(); ++i) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(h(i, c) == 0.0);
  }

  const auto perm = oracle::random_permutation(rng, g.num_nodes);
  const auto eperm = oracle::random_permutation(rng, g.edges.size());
  const Graph pg = oracle::permute_graph(g, perm, eperm);
  Tape t2;
  const Matrix ph = embed_tokens(t2, m, pg, augment(pg)).value();
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(ph(perm[i], c) == h(i, c));
  }

  Graph bad = g;
  bad.node_features = Matrix(g.num_nodes, 3);
  Tape t3;
  CHECK_THROWS(embed_tokens(t3, m, bad, ag));
}

TEST_CASE("zero sublayers reduce the layer to its residual path") {
  Rng rng(2);
  ModelConfig cfg = small_config(8, 2, {0, 0});
  cfg.norm = NormPlacement::pre;
  Model m = init_model(cfg, 3, 0);
  LayerParams& p = m.layers[0];
  p.out_proj.mutable_value().fill(0.0);
  p.ffn_in.mutable_value().fill(0.0);
  p.ffn_out.mutable_value().fill(0.0);
  const Graph g = oracle::random_graph(rng, 5, 0.5);
  const AugmentedGraph ag = augment(g);
  const Tensor z = Tensor::constant(oracle::random_matrix(rng, ag.total_tokens(), 8));
  Tape t;
  const Tensor out = encoder_layer(t, z, build_head_masks(ag, cfg.head_hops), p, cfg);
  CHECK(out.value() == z.value());
}

TEST_CASE("single head with a full mask equals the vanilla encoder layer") {
  Rng rng(3);
  for (NormPlacement norm : {NormPlacement::post, NormPlacement::pre}) {
    ModelConfig cfg = small_config(6, 1, {0});
    cfg.norm = norm;
    const Model m = init_model(cfg, 2, 0);
    const Matrix z = oracle::random_matrix(rng, 4, 6);
    Tape t;
    const Tensor out = encoder_layer(t, Tensor::constant(z), {oracle::full_mask(4)}, m.layers[0], cfg);
    CHECK(max_abs_diff(out.value(), oracle::vanilla_encoder_layer(z, m.layers[0], cfg)) <= 1e-10);
  }
}

TEST_CASE("hops at or beyond the diameter reproduce a vanilla encoder") {
  Rng rng(4);
  const Graph g = [&] {
    Graph h = generate_watts_strogatz(10, 4, 0.3, 5);
    h.node_features = oracle::random_matrix(rng, 10, 3);
    h.edge_features = oracle::random_matrix(rng, h.edges.size(), 2);
    return h;
  }();
  const AugmentedGraph ag = augment(g);
  const std::size_t diameter = augmented_diameter(ag);
  ModelConfig cfg = small_config(8, 4, {diameter, diameter + 1, diameter + 3, 48});
  cfg.num_layers = 2;
  const Model m = init_model(cfg, 3, 2);
  const Matrix out = run_forward(m, g, cfg.head_hops);
  CHECK(max_abs_diff(out, oracle::vanilla_forward(m, g)) <= 1e-10);
}

TEST_CASE("forward basics") {
  Rng rng(5);
  const Graph g = oracle::random_graph(rng, 7, 0.4, 3);
  ModelConfig cfg = small_config();
  cfg.num_layers = 0;
  const Model m0 = init_model(cfg, 3, 0);
  const AugmentedGraph ag = augment(g);
  Tape t;
  CHECK(run_forward(m0, g, cfg.head_hops) == embed_tokens(t, m0, g, ag).value());

  cfg.num_layers = 2;
  const Model m = init_model(cfg, 3, 0);
  CHECK(bit_equal(run_forward(m, g, cfg.head_hops), run_forward(m, g, cfg.head_hops)));

  cfg.dropout = 0.3;
  cfg.attention_dropout = 0.2;
  const Model md = init_model(cfg, 3, 0);
  const Matrix eval = run_forward(md, g, cfg.head_hops);
  CHECK(bit_equal(eval, run_forward(m, g, cfg.head_hops)));  // same weights, dropout off
  const Matrix tr1 = run_forward(md, g, cfg.head_hops, {true, 7, nullptr});
  const Matrix tr2 = run_forward(md, g, cfg.head_hops, {true, 7, nullptr});
  const Matrix tr3 = run_forward(md, g, cfg.head_hops, {true, 8, nullptr});
  CHECK(bit_equal(tr1, tr2));
  CHECK_FALSE(bit_equal(tr1, eval));
  CHECK_FALSE(bit_equal(tr1, tr3));
}

TEST_CASE("two layers see at most twice the hop budget") {
  Rng rng(6);
  for (int trial = 0; trial < 4; ++trial) {
    Graph g = oracle::random_graph(rng, 8, 0.25, 2, 2);
    const AugmentedGraph ag = augment(g);
    for (std::size_t n : {1, 2}) {
      ModelConfig cfg = small_config(4, 1, {n});
      cfg.num_layers = 2;
      const Model m = init_model(cfg, 2, 2);
      Tape t;
      const Matrix emb = embed_tokens(t, m, g, ag).value();
      const auto influenced = receptive_field_all(m, emb, build_head_masks(ag, cfg.head_hops));
      bool saw_beyond_one_layer = false;
      for (std::size_t i = 0; i < ag.total_tokens(); ++i) {
        const auto dist = incidence_distances(ag, i);
        for (std::size_t j : influenced[i]) {
          CHECK(dist[j] <= 2 * n);
          saw_beyond_one_layer |= dist[j] > n;
        }
      }
      CHECK(saw_beyond_one_layer);
    }
  }
}

TEST_CASE("readout") {
  Tape t;
  const Tensor onehot = Tensor::constant(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {0, 0, 1}, {1, 0, 0}}));
  CHECK(readout(t, onehot, Readout::sum).value() == Matrix::from_rows({{3, 1, 1}}));
  const Tensor same = Tensor::constant(Matrix::from_rows({{0.25, -2, 7}, {0.25, -2, 7}, {0.25, -2, 7}}));
  CHECK(max_abs_diff(readout(t, same, Readout::mean).value(), Matrix::from_rows({{0.25, -2, 7}})) <= 1e-15);
}

TEST_CASE("node outputs are permutation equivariant and readout invariant") {
  Rng rng(7);
  ModelConfig cfg = small_config(8, 2, {2, 4});
  cfg.num_layers = 2;
  const Model m = init_model(cfg, 3, 2);
  for (int trial = 0; trial < 5; ++trial) {
    const Graph g = oracle::random_graph(rng, 9, 0.35, 3, 2);
    const auto perm = oracle::random_permutation(rng, g.num_nodes);
    const auto eperm = oracle::random_permutation(rng, g.edges.size());
    const Graph pg = oracle::permute_graph(g, perm, eperm);
    const Matrix h = run_forward(m, g, cfg.head_hops);
    const Matrix ph = run_forward(m, pg, cfg.head_hops);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      for (std::size_t c = 0; c < 8; ++c) CHECK(std::abs(ph(perm[v], c) - h(v, c)) <= 1e-12);
    }
    for (std::size_t j = 0; j < g.edges.size(); ++j) {
      for (std::size_t c = 0; c < 8; ++c) {
        CHECK(std::abs(ph(g.num_nodes + eperm[j], c) - h(g.num_nodes + j, c)) <= 1e-12);
      }
    }
    Tape t;
    for (Readout mode : {Readout::mean, Readout::sum}) {
      const Matrix r1 = readout(t, Tensor::constant(h), mode).value();
      const Matrix r2 = readout(t, Tensor::constant(ph), mode).value();
      CHECK(max_abs_diff(r1, r2) <= 1e-12);
    }
  }
}

TEST_CASE("task heads") {
  ModelConfig cfg = small_config();
  cfg.num_classes = 3;
  Model m = init_model(cfg, 2, 0);
  m.head_weight.mutable_value().fill(0.0);
  Tape t;
  const Graph g = oracle::path_graph(3, 2);
  const AugmentedGraph ag = augment(g);
  const Tensor h = forward(t, m, g, ag, build_head_masks(ag, cfg.head_hops));
  const Matrix logits = predict_node(t, m, h, g.num_nodes).value();
  CHECK(logits.rows() == 3);
  CHECK(logits.cols() == 3);
  CHECK(logits == Matrix(3, 3));
  CHECK(argmax_rows(logits) == std::vector<std::size_t>{0, 0, 0});
  CHECK(argmax_rows(Matrix::from_rows({{1, 5, 5}, {2, 1, 2}, {0, 0, 3}})) == std::vector<std::size_t>{1, 0, 2});

  // Edge-token rows never reach the node head.
  Model m2 = init_model(cfg, 2, 0);
  Matrix perturbed = h.value();
  for (std::size_t r = g.num_nodes; r < perturbed.rows(); ++r) perturbed.row(r)[0] += 100.0;
  Tape t2;
  CHECK(predict_node(t2, m2, Tensor::constant(h.value()), 3).value() ==
        predict_node(t2, m2, Tensor::constant(perturbed), 3).value());

  CHECK_THROWS_AS(predict_graph(t2, m2, readout(t2, h, Readout::mean)), InputError);
  ModelConfig gcfg = cfg;
  gcfg.task = Task::graph_regression;
  const Model mg = init_model(gcfg, 2, 0);
  CHECK_THROWS_AS(predict_node(t2, mg, h, 3), InputError);
  CHECK(predict_graph(t2, mg, readout(t2, h, Readout::mean)).value().cols() == 1);

  CHECK(task_from_string(to_string(Task::graph_classification)) == Task::graph_classification);
  CHECK_THROWS_AS(task_from_string("edge_prediction"), InputError);
}

TEST_CASE("full model gradients match finite differences") {
  Rng rng(8);
  Graph g = oracle::random_graph(rng, 4, 0.7, 2, 2);
  ModelConfig cfg = small_config(4, 2, {1, 3});
  cfg.num_layers = 2;
  cfg.ffn_dim = 5;
  cfg.num_classes = 3;
  const Model m = init_model(cfg, 2, 2);
  const AugmentedGraph ag = augment(g);
  const auto masks = build_head_masks(ag, cfg.head_hops);
  const auto f = [&](Tape& t) {
    const Tensor logits = predict_node(t, m, forward(t, m, g, ag, masks), g.num_nodes);
    // Mean squared logit keeps the test independent of the losses module.
    return ag::scale(t, ag::sum(t, ag::hadamard(t, logits, logits)), 0.1);
  };
  const auto params = m.parameters();
  const auto errors = ag::grad_check(f, params);
  for (std::size_t i = 0; i < errors.size(); ++i) CHECK(errors[i] < 1e-4);
}
