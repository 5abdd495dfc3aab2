// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hopformer/graph.hpp"

namespace hopformer {

/// Graph JSON: {num_nodes, edges: [[u,v],...], node_features: [[...],...],
/// edge_features?, node_labels?, graph_label?}. A reversed duplicate (v,u)
/// of an existing edge is treated as a directed input and merged; the
/// merge is reported through `warnings`.
Graph graph_from_json(const nlohmann::json& j, std::vector<std::string>* warnings = nullptr);
nlohmann::json graph_to_json(const Graph& g);

/// Parses one graph object. Throws InputError with a line number on
/// malformed JSON and a field path on schema violations.
Graph load_graph(std::string_view text, std::vector<std::string>* warnings = nullptr);

/// Accepts either a single graph object or an array of graph objects.
std::vector<Graph> load_dataset(std::string_view text, std::vector<std::string>* warnings = nullptr);

nlohmann::json augmented_to_json(const AugmentedGraph& ag);

/// Parses text as JSON, converting parse failures to InputError with a line.
nlohmann::json parse_json_text(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace hopformer
