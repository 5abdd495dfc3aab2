// SPDX-License-Identifier: Apache-2.0
#include "hopformer/graph_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hopformer/error.hpp"

namespace hopformer {
namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw InputError("field '" + path + "': " + what);
}

std::size_t as_index(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0) field_error(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

Matrix as_matrix(const json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected an array of rows");
  if (j.empty()) return {};
  std::size_t cols = 0;
  std::vector<double> data;
  for (std::size_t r = 0; r < j.size(); ++r) {
    const json& row = j[r];
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!row.is_array()) field_error(rp, "expected an array of numbers");
    if (r == 0) cols = row.size();
    if (row.size() != cols) {
      field_error(rp, "has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!row[c].is_number()) field_error(rp + "[" + std::to_string(c) + "]", "expected a number");
      const double x = row[c].get<double>();
      if (!std::isfinite(x)) field_error(rp + "[" + std::to_string(c) + "]", "non-finite value");
      data.push_back(x);
    }
  }
  return Matrix(j.size(), cols, std::move(data));
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) line += text[i] == '\n';
  return line;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

}  // namespace

json parse_json_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw InputError("JSON parse error at line " + std::to_string(line_of(text, e.byte)) + ": " +
                     e.what());
  }
}

Graph graph_from_json(const json& j, std::vector<std::string>* warnings) {
  if (!j.is_object()) throw InputError("graph must be a JSON object");
  static const char* known[] = {"num_nodes", "edges", "node_features", "edge_features",
                                "node_labels", "graph_label"};
  for (const auto& item : j.items()) {
    if (std::find(std::begin(known), std::end(known), item.key()) == std::end(known)) {
      field_error(item.key(), "unknown key");
    }
  }
  if (!j.contains("num_nodes")) field_error("num_nodes", "missing");
  if (!j.contains("edges")) field_error("edges", "missing");
  if (!j.contains("node_features")) field_error("node_features", "missing");

  Graph g;
  g.num_nodes = as_index(j["num_nodes"], "num_nodes");

  const json& edges = j["edges"];
  if (!edges.is_array()) field_error("edges", "expected an array of [u, v] pairs");
  std::vector<Edge> raw;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string p = "edges[" + std::to_string(i) + "]";
    if (!edges[i].is_array() || edges[i].size() != 2) field_error(p, "expected a pair [u, v]");
    raw.emplace_back(as_index(edges[i][0], p + "[0]"), as_index(edges[i][1], p + "[1]"));
  }

  g.node_features = as_matrix(j["node_features"], "node_features");
  if (g.node_features.rows() == 0 && g.num_nodes > 0) {
    field_error("node_features", "has 0 rows but num_nodes is " + std::to_string(g.num_nodes));
  }
  std::optional<Matrix> edge_features;
  if (j.contains("edge_features") && !j["edge_features"].is_null()) {
    edge_features = as_matrix(j["edge_features"], "edge_features");
    if (edge_features->rows() != raw.size()) {
      throw InputError("edge_features has " + std::to_string(edge_features->rows()) +
                       " rows but there are " + std::to_string(raw.size()) + " edges");
    }
  }

  // Symmetrise directed input: (v, u) after (u, v) is the same undirected
  // edge. Same-orientation repeats stay and are rejected by validate().
  std::map<Edge, std::size_t> first_seen;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Edge reversed{raw[i].second, raw[i].first};
    if (raw[i].first != raw[i].second && first_seen.count(reversed) != 0 && first_seen.count(raw[i]) == 0) {
      if (warnings) {
        warnings->push_back("edges[" + std::to_string(i) + "] reverses edges[" +
                            std::to_string(first_seen[reversed]) +
                            "]; treating input as directed and merging");
      }
      continue;
    }
    first_seen.emplace(raw[i], i);
    keep.push_back(i);
  }
  for (std::size_t i : keep) g.edges.push_back(raw[i]);
  if (edge_features) {
    Matrix kept(keep.size(), edge_features->cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
      std::copy(edge_features->row(keep[r]).begin(), edge_features->row(keep[r]).end(),
                kept.row(r).begin());
    }
    g.edge_features = std::move(kept);
  }

  if (j.contains("node_labels") && !j["node_labels"].is_null()) {
    const json& labels = j["node_labels"];
    if (!labels.is_array()) field_error("node_labels", "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      out.push_back(static_cast<int>(as_index(labels[i], "node_labels[" + std::to_string(i) + "]")));
    }
    g.node_labels = std::move(out);
  }
  if (j.contains("graph_label") && !j["graph_label"].is_null()) {
    if (!j["graph_label"].is_number()) field_error("graph_label", "expected a number");
    g.graph_label = j["graph_label"].get<double>();
  }

  validate(g);
  return g;
}

json graph_to_json(const Graph& g) {
  json j;
  j["num_nodes"] = g.num_nodes;
  json edges = json::array();
  for (const auto& [u, v] : g.edges) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  j["node_features"] = matrix_json(g.node_features);
  if (g.edge_features) j["edge_features"] = matrix_json(*g.edge_features);
  if (g.node_labels) j["node_labels"] = *g.node_labels;
  if (g.graph_label) j["graph_label"] = *g.graph_label;
  return j;
}

Graph load_graph(std::string_view text, std::vector<std::string>* warnings) {
  return graph_from_json(parse_json_text(text), warnings);
}

std::vector<Graph> load_dataset(std::string_view text, std::vector<std::string>* warnings) {
  const json j = parse_json_text(text);
  std::vector<Graph> out;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      try {
        out.push_back(graph_from_json(j[i], warnings));
      } catch (const InputError& e) {
        throw InputError("graph " + std::to_string(i) + ": " + e.what());
      }
    }
  } else {
    out.push_back(graph_from_json(j, warnings));
  }
  return out;
}

json augmented_to_json(const AugmentedGraph& ag) {
  json j;
  j["num_node_tokens"] = ag.num_node_tokens;
  j["num_edge_tokens"] = ag.num_edge_tokens;
  j["total_tokens"] = ag.total_tokens();
  j["directed_links"] = ag.adjacency.nnz();
  json kinds = json::array();
  for (TokenKind k : ag.token_kind) kinds.push_back(k == TokenKind::node ? "node" : "edge");
  j["token_kind"] = std::move(kinds);
  json origin = json::array();
  for (const auto& [u, v] : ag.edge_token_origin) origin.push_back({u, v});
  j["edge_token_origin"] = std::move(origin);
  j["row_ptr"] = ag.adjacency.row_ptr;
  j["col_idx"] = ag.adjacency.col_idx;
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw InputError("write failed for '" + path + "'");
}

}  // namespace hopformer
