// SPDX-License-Identifier: Apache-2.0
#include "hopformer/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <string>

#include "hopformer/error.hpp"

namespace hopformer {
namespace {

constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

std::vector<std::size_t> bfs(const std::vector<std::vector<std::size_t>>& adj, std::size_t source) {
  std::vector<std::size_t> dist(adj.size(), kUnreached);
  std::vector<std::size_t> queue{source};
  dist[source] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t u = queue[head];
    for (std::size_t w : adj[u]) {
      if (dist[w] == kUnreached) {
        dist[w] = dist[u] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string hops_label(const std::vector<std::size_t>& hops) {
  std::string s;
  for (std::size_t i = 0; i < hops.size(); ++i) s += (i ? "/" : "") + std::to_string(hops[i]);
  return s;
}

Matrix probe_output(const Model& m, const Matrix& embeddings, const std::vector<HopMaskPtr>& masks,
                    const ProbeTarget& target) {
  ag::Tape t;
  std::vector<LayerTrace> trace;
  ForwardOptions opts;
  if (target.head) opts.trace = &trace;
  const ag::Tensor out = encode(t, m, ag::Tensor::constant(embeddings), masks, opts);
  if (!target.head) return out.value();
  if (trace.empty()) throw InputError("head probe needs at least one encoder layer");
  if (*target.head >= trace.front().head_outputs.size()) throw InputError("head index out of range");
  return trace.front().head_outputs[*target.head];
}

bool rows_bit_equal(const Matrix& a, const Matrix& b, std::size_t r) {
  return std::memcmp(a.row(r).data(), b.row(r).data(), a.cols() * sizeof(double)) == 0;
}

}  // namespace

double clustering_coefficient(const Graph& g) {
  validate(g);
  if (g.num_nodes == 0) return 0.0;
  const auto adj = adjacency_lists(g);
  double total = 0.0;
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    const auto& nb = adj[v];
    const std::size_t deg = nb.size();
    if (deg < 2) continue;
    std::size_t links = 0;
    for (std::size_t a = 0; a < deg; ++a) {
      for (std::size_t b = a + 1; b < deg; ++b) {
        links += std::binary_search(adj[nb[a]].begin(), adj[nb[a]].end(), nb[b]);
      }
    }
    total += 2.0 * static_cast<double>(links) / (static_cast<double>(deg) * static_cast<double>(deg - 1));
  }
  return total / static_cast<double>(g.num_nodes);
}

double avg_shortest_path(const Graph& g) {
  validate(g);
  if (g.num_nodes < 2) throw InputError("average shortest path needs at least 2 nodes");
  const auto adj = adjacency_lists(g);
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t u = 0; u < g.num_nodes; ++u) {
    const auto dist = bfs(adj, u);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      if (v == u || dist[v] == kUnreached) continue;
      total += static_cast<double>(dist[v]);
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

SmallWorldReport small_world_report(const Graph& g) {
  SmallWorldReport r;
  r.clustering = clustering_coefficient(g);
  r.avg_path_length = avg_shortest_path(g);

  const auto adj = adjacency_lists(g);
  std::vector<std::size_t> component(g.num_nodes, kUnreached);
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t s = 0; s < g.num_nodes; ++s) {
    if (component[s] != kUnreached) continue;
    const auto dist = bfs(adj, s);
    members.emplace_back();
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
      if (dist[v] != kUnreached) {
        component[v] = members.size() - 1;
        members.back().push_back(v);
      }
    }
  }
  r.num_components = members.size();
  std::size_t largest = 0;
  for (std::size_t c = 1; c < members.size(); ++c) {
    if (members[c].size() > members[largest].size()) largest = c;
  }
  for (std::size_t v : members[largest]) {
    const auto dist = bfs(adj, v);
    for (std::size_t w : members[largest]) r.diameter_of_largest_component = std::max(r.diameter_of_largest_component, dist[w]);
  }
  return r;
}

DatasetSmallWorld dataset_small_world(const std::vector<Graph>& graphs) {
  if (graphs.empty()) throw InputError("dataset_small_world: empty dataset");
  DatasetSmallWorld out;
  for (const Graph& g : graphs) {
    out.per_graph.push_back(small_world_report(g));
    out.mean_clustering += out.per_graph.back().clustering;
    out.mean_path_length += out.per_graph.back().avg_path_length;
  }
  out.mean_clustering /= static_cast<double>(graphs.size());
  out.mean_path_length /= static_cast<double>(graphs.size());
  return out;
}

void write_small_world_csv(std::ostream& os, const std::vector<Graph>& graphs,
                           const DatasetSmallWorld& report) {
  os << "# schema: graph,num_nodes,num_edges,clustering,avg_path_length,num_components,"
        "diameter_largest_component\n";
  os << "# measured on the original graph; path length averages reachable ordered pairs\n";
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    const auto& r = report.per_graph[i];
    os << i << ',' << graphs[i].num_nodes << ',' << graphs[i].num_edges() << ',' << fmt(r.clustering)
       << ',' << fmt(r.avg_path_length) << ',' << r.num_components << ','
       << r.diameter_of_largest_component << '\n';
  }
  os << "mean,,," << fmt(report.mean_clustering) << ',' << fmt(report.mean_path_length) << ",,\n";
}

std::vector<std::vector<std::size_t>> receptive_field_all(const Model& m, const Matrix& embeddings,
                                                          const std::vector<HopMaskPtr>& masks,
                                                          ProbeTarget target, Perturbation how) {
  const Matrix base = probe_output(m, embeddings, masks, target);
  const std::size_t tokens = embeddings.rows();
  std::vector<std::vector<std::size_t>> influenced(tokens);
  for (std::size_t j = 0; j < tokens; ++j) {
    Matrix perturbed = embeddings;
    for (std::size_t c = 0; c < perturbed.cols(); ++c) {
      perturbed(j, c) = how == Perturbation::zero ? 0.0 : perturbed(j, c) + 1.0 + 0.25 * static_cast<double>(c);
    }
    const Matrix out = probe_output(m, perturbed, masks, target);
    for (std::size_t i = 0; i < tokens; ++i) {
      if (!rows_bit_equal(base, out, i)) influenced[i].push_back(j);
    }
  }
  return influenced;
}

std::vector<std::size_t> receptive_field_probe(const Model& m, const Matrix& embeddings,
                                               const std::vector<HopMaskPtr>& masks, std::size_t token,
                                               ProbeTarget target, Perturbation how) {
  if (token >= embeddings.rows()) throw InputError("probe token out of range");
  return receptive_field_all(m, embeddings, masks, target, how)[token];
}

FlopTally flop_count(const ModelConfig& cfg, const std::vector<std::size_t>& head_nnz,
                     std::size_t num_nodes, std::size_t num_edges, std::size_t node_feature_dim,
                     std::size_t edge_feature_dim) {
  cfg.validate();
  if (head_nnz.size() != cfg.num_heads) throw InputError("flop_count: one nnz per head required");
  using namespace flop_cost;
  const std::uint64_t tokens = num_nodes + num_edges;
  const std::uint64_t d = cfg.hidden_dim, dh = cfg.head_dim(), f = cfg.ffn_dim;

  FlopTally tally;
  tally.dense += matmul(num_nodes, node_feature_dim, d);
  if (num_edges > 0 && edge_feature_dim > 0) tally.dense += matmul(num_edges, edge_feature_dim, d);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    tally.dense += 3 * cfg.num_heads * matmul(tokens, d, dh);
    for (std::size_t nnz : head_nnz) tally.attention += attention(nnz, dh);
    tally.dense += matmul(tokens, d, d);           // output projection
    tally.dense += elementwise(tokens, d);         // residual
    tally.dense += matmul(tokens, d, f) + elementwise(tokens, f) + elementwise(tokens, f);
    tally.dense += matmul(tokens, f, d) + elementwise(tokens, d);
    tally.dense += elementwise(tokens, d);         // residual
    tally.dense += 2 * layer_norm(tokens, d);
  }
  return tally;
}

FlopTally flop_count(const ModelConfig& cfg, const std::vector<HopMaskPtr>& masks,
                     const AugmentedGraph& ag, std::size_t node_feature_dim,
                     std::size_t edge_feature_dim) {
  std::vector<std::size_t> nnz;
  for (const auto& m : masks) nnz.push_back(m->nnz());
  return flop_count(cfg, nnz, ag.num_node_tokens, ag.num_edge_tokens, node_feature_dim, edge_feature_dim);
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("fit_line: need at least 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw InputError("fit_line: degenerate fit, every x is equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += r * r;
  }
  fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

FlopReport flops_vs_nnz_report(const std::vector<Graph>& graphs,
                               const std::vector<std::vector<std::size_t>>& hop_configs,
                               const ModelConfig& cfg) {
  if (graphs.empty()) throw InputError("flops report: no graphs");
  if (hop_configs.size() < 3) throw InputError("flops report: need at least 3 hop configs");

  FlopReport report;
  report.attention_counts_agree = true;
  std::vector<double> all_nnz, all_total, all_attention;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = graphs[gi];
    const AugmentedGraph aug = augment(g);
    MaskCache cache(aug);
    std::vector<double> nnz, total;
    for (const auto& hops : hop_configs) {
      ModelConfig c = cfg;
      c.head_hops = hops;
      c.num_heads = hops.size();
      const Model m = init_model(c, g.node_feature_dim(), g.edge_feature_dim());
      const auto masks = cache.heads(hops);

      FlopRow row;
      row.graph_index = gi;
      row.head_hops = hops;
      for (const auto& mask : masks) row.total_nnz += mask->nnz();
      row.analytic = flop_count(c, masks, aug, g.node_feature_dim(), g.edge_feature_dim());
      {
        ScopedFlopMeter meter;
        ag::Tape t;
        forward(t, m, g, aug, masks);
        row.counted = meter.tally();
      }
      report.attention_counts_agree &= row.counted.attention == row.analytic.attention;
      nnz.push_back(static_cast<double>(row.total_nnz));
      total.push_back(static_cast<double>(row.counted.total()));
      all_attention.push_back(static_cast<double>(row.counted.attention));
      report.rows.push_back(std::move(row));
    }
    report.per_graph_total.push_back(fit_line(nnz, total));
    all_nnz.insert(all_nnz.end(), nnz.begin(), nnz.end());
    all_total.insert(all_total.end(), total.begin(), total.end());
  }
  report.pooled_total = fit_line(all_nnz, all_total);
  report.pooled_attention = fit_line(all_nnz, all_attention);
  return report;
}

void write_flop_csv(std::ostream& os, const FlopReport& report) {
  os << "# schema: graph,head_hops,total_nnz,attention_flops,total_flops,counted_attention_flops,"
        "counted_total_flops\n";
  os << "# convention: multiply-add = 2 FLOPs; exp, divide, subtract, scale = 1 FLOP each; "
        "forward pass through the encoder, task head excluded\n";
  for (const FlopRow& r : report.rows) {
    os << r.graph_index << ',' << hops_label(r.head_hops) << ',' << r.total_nnz << ','
       << r.analytic.attention << ',' << r.analytic.total() << ',' << r.counted.attention << ','
       << r.counted.total() << '\n';
  }
  auto fit_line_text = [&](const std::string& name, const LinearFit& f) {
    os << "# fit " << name << ": slope=" << fmt(f.slope) << " intercept=" << fmt(f.intercept)
       << " r2=" << fmt(f.r_squared) << '\n';
  };
  for (std::size_t g = 0; g < report.per_graph_total.size(); ++g) {
    fit_line_text("graph " + std::to_string(g) + " total", report.per_graph_total[g]);
  }
  fit_line_text("pooled total", report.pooled_total);
  fit_line_text("pooled attention", report.pooled_attention);
  os << "# counted attention equals analytic: " << (report.attention_counts_agree ? "yes" : "no") << '\n';
}

}  // namespace hopformer
