// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hopformer/analysis.hpp"
#include "hopformer/config_io.hpp"
#include "hopformer/error.hpp"
#include "hopformer/graph.hpp"
#include "hopformer/graph_io.hpp"
#include "hopformer/hop_mask.hpp"
#include "hopformer/training.hpp"

namespace hopformer::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const char* kHopNote =
    "Hop budgets count incidence hops on the augmented graph: one edge of the original graph "
    "is two incidence hops (node -> edge token -> node).";

std::vector<std::size_t> parse_hop_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789 ") != std::string::npos) {
      throw InputError("bad hop list '" + text + "': expected comma-separated non-negative integers");
    }
    out.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  if (out.empty()) throw InputError("empty hop list");
  return out;
}

std::vector<std::vector<std::size_t>> parse_hop_configs(const std::string& text) {
  std::vector<std::vector<std::size_t>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (!item.empty()) out.push_back(parse_hop_list(item));
  }
  if (out.empty()) throw InputError("empty --hop-configs");
  return out;
}

// Writes to `path`, or to `out` when path is empty or "-".
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_file(path, text);
  }
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::string csv_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return {};
  return run_config_from_json(parse_json_text(read_file(path)));
}

// ------------------------------------------------------------- commands

struct GenArgs {
  std::string model = "ws";
  std::size_t n = 20;
  std::size_t k = 4;
  double beta = 0.1;
  double p = 0.1;
  std::string blocks = "30,30";
  double p_in = 0.3;
  double p_out = 0.02;
  std::size_t feature_dim = 0;
  double signal = 1.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
  std::string output;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  Graph g;
  if (a.model == "ws") {
    g = generate_watts_strogatz(a.n, a.k, a.beta, a.seed);
  } else if (a.model == "er") {
    g = generate_erdos_renyi(a.n, a.p, a.seed);
  } else if (a.model == "sbm") {
    g = generate_sbm(parse_hop_list(a.blocks), a.p_in, a.p_out, a.seed);
    if (a.feature_dim > 0) attach_class_features(g, a.feature_dim, a.signal, a.noise, a.seed + 1);
  } else {
    throw InputError("unknown generator '" + a.model + "' (expected ws, er or sbm)");
  }
  emit(a.output, graph_to_json(g).dump() + "\n", out);
  return 0;
}

int cmd_augment(const std::string& input, const std::string& output, std::ostream& out,
                std::ostream& err) {
  std::vector<std::string> warnings;
  const Graph g = load_graph(read_file(input), &warnings);
  print_warnings(warnings, err);
  const AugmentedGraph ag = augment(g);
  emit(output, augmented_to_json(ag).dump(2) + "\n", out);
  return 0;
}

int cmd_masks(const std::string& input, const std::string& hops_text, const std::string& output,
              std::ostream& out, std::ostream& err) {
  std::vector<std::string> warnings;
  const Graph g = load_graph(read_file(input), &warnings);
  print_warnings(warnings, err);
  const auto hops = parse_hop_list(hops_text);
  const AugmentedGraph ag = augment(g);
  const auto masks = build_head_masks(ag, hops);

  json stats = json::object();
  stats["total_tokens"] = ag.total_tokens();
  stats["hop_units"] = "incidence";
  json heads = json::array();
  std::map<std::size_t, std::string> dumps;
  for (std::size_t h = 0; h < masks.size(); ++h) {
    const MaskStats s = mask_stats(*masks[h]);
    const std::string file = "mask_n" + std::to_string(hops[h]) + ".txt";
    heads.push_back({{"head", h},
                     {"hop_budget", hops[h]},
                     {"nnz", s.nnz},
                     {"density", s.density},
                     {"max_row_degree", s.max_row_degree},
                     {"mean_row_degree", s.mean_row_degree},
                     {"dump", file}});
    if (!dumps.count(hops[h])) {
      std::ostringstream ss;
      write_mask_dump(ss, *masks[h]);
      dumps[hops[h]] = ss.str();
    }
  }
  stats["heads"] = std::move(heads);

  if (output.empty() || output == "-") {
    out << stats.dump(2) << '\n';
    return 0;
  }
  fs::create_directories(output);
  for (const auto& [hop, text] : dumps) write_file((fs::path(output) / ("mask_n" + std::to_string(hop) + ".txt")).string(), text);
  write_file((fs::path(output) / "mask_stats.json").string(), stats.dump(2) + "\n");
  return 0;
}

std::string history_csv(const RunHistory& h) {
  std::ostringstream ss;
  ss << "# schema: epoch,train_loss,val_metric,test_metric,seconds\n";
  ss << "# metric: " << h.metric_name << "; best_epoch: "
     << (h.best_epoch ? std::to_string(*h.best_epoch) : std::string("none")) << '\n';
  for (const EpochRecord& e : h.epochs) {
    ss << e.epoch << ',' << csv_double(e.train_loss) << ',' << csv_double(e.val_metric) << ','
       << csv_double(e.test_metric) << ',' << csv_double(e.seconds) << '\n';
  }
  return ss.str();
}

struct TrainArgs {
  std::string input;
  std::string config;
  std::string output = "run";
  std::optional<std::uint64_t> seed;
  bool no_timing = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const std::string started = a.no_timing ? std::string() : utc_now();
  RunConfig rc = load_run_config(a.config);
  if (a.seed) {
    rc.model.seed = *a.seed;
    rc.train.seed = *a.seed;
  }
  std::vector<std::string> warnings;
  std::vector<Graph> graphs = load_dataset(read_file(a.input), &warnings);
  print_warnings(warnings, err);

  fs::create_directories(a.output);
  const std::string ckpt_path = (fs::path(a.output) / "checkpoint.json").string();
  const std::string hist_path = (fs::path(a.output) / "history.csv").string();
  const std::string manifest_path = (fs::path(a.output) / "manifest.json").string();

  TrainResult result{};
  json final_metrics;
  if (rc.model.task == Task::node_classification) {
    if (graphs.size() != 1) throw InputError("node_classification expects exactly one graph");
    const std::size_t d_e = graphs[0].edge_feature_dim();
    NodeDataset ds = prepare_node_dataset(std::move(graphs[0]), rc.model.head_hops, rc.train);
    if (!ds.graph.node_labels) throw InputError("node task requires node_labels");
    int max_label = 0;
    for (int y : *ds.graph.node_labels) max_label = std::max(max_label, y);
    if (static_cast<std::size_t>(max_label) >= rc.model.num_classes) {
      throw InputError("node label " + std::to_string(max_label) + " exceeds num_classes");
    }
    const Model init = init_model(rc.model, ds.graph.node_feature_dim(), d_e);
    result = train(init, ds, rc.train, !a.no_timing);
    for (auto [part, name] : {std::pair{SplitPart::train, "train"}, {SplitPart::val, "val"}, {SplitPart::test, "test"}}) {
      try {
        final_metrics[name] = evaluate(result.model, ds, part).value;
      } catch (const InputError&) {
        final_metrics[name] = nullptr;
      }
    }
  } else {
    const std::size_t d_e = graphs.front().edge_feature_dim();
    const std::size_t d_v = graphs.front().node_feature_dim();
    GraphDataset ds = prepare_graph_dataset(std::move(graphs), rc.model.head_hops, rc.train);
    const Model init = init_model(rc.model, d_v, d_e);
    result = train(init, ds, rc.train, !a.no_timing);
    for (auto [part, name] : {std::pair{SplitPart::train, "train"}, {SplitPart::val, "val"}, {SplitPart::test, "test"}}) {
      try {
        final_metrics[name] = evaluate(result.model, ds, part).value;
      } catch (const InputError&) {
        final_metrics[name] = nullptr;
      }
    }
  }

  write_file(ckpt_path, save_checkpoint(result.model).dump() + "\n");
  write_file(hist_path, history_csv(result.history));

  json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["config_hash"] = hex64(config_hash(to_json(rc)));
  manifest["config"] = to_json(rc);
  manifest["seeds"] = {{"model", rc.model.seed}, {"train", rc.train.seed}};
  manifest["inputs"] = json::array({a.input});
  if (!a.config.empty()) manifest["inputs"].push_back(a.config);
  manifest["outputs"] = {ckpt_path, hist_path, manifest_path};
  manifest["metric"] = result.history.metric_name;
  manifest["final_metrics"] = final_metrics;
  manifest["epochs_run"] = result.history.size();
  manifest["best_epoch"] = result.history.best_epoch ? json(*result.history.best_epoch) : json(nullptr);
  manifest["started_at"] = a.no_timing ? json(nullptr) : json(started);
  manifest["finished_at"] = a.no_timing ? json(nullptr) : json(utc_now());
  write_file(manifest_path, manifest.dump(2) + "\n");

  out << "trained " << result.history.size() << " epochs; " << result.history.metric_name
      << " train=" << final_metrics["train"].dump() << " val=" << final_metrics["val"].dump()
      << " test=" << final_metrics["test"].dump() << "\n";
  return 0;
}

int cmd_analyze(const std::string& input, const std::string& output, std::ostream& out,
                std::ostream& err) {
  std::vector<std::string> warnings;
  const std::vector<Graph> graphs = load_dataset(read_file(input), &warnings);
  print_warnings(warnings, err);
  const DatasetSmallWorld report = dataset_small_world(graphs);
  std::ostringstream ss;
  write_small_world_csv(ss, graphs, report);
  emit(output, ss.str(), out);
  return 0;
}

int cmd_flops(const std::vector<std::string>& inputs, const std::string& config,
              const std::string& hop_configs, const std::string& output, std::ostream& out,
              std::ostream& err) {
  RunConfig rc = load_run_config(config);
  if (config.empty()) rc.model.num_layers = 1;
  std::vector<Graph> graphs;
  for (const auto& path : inputs) {
    std::vector<std::string> warnings;
    auto part = load_dataset(read_file(path), &warnings);
    print_warnings(warnings, err);
    for (auto& g : part) graphs.push_back(std::move(g));
  }
  const FlopReport report = flops_vs_nnz_report(graphs, parse_hop_configs(hop_configs), rc.model);
  std::ostringstream ss;
  write_flop_csv(ss, report);
  emit(output, ss.str(), out);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"HopFormer: graph Transformer with head-specific n-hop sparse attention masks"};
  app.name("hopformer");
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic graph as JSON");
  g->add_option("--model", gen.model, "Generator: ws (Watts-Strogatz), er (Erdos-Renyi), sbm")->capture_default_str();
  g->add_option("--n", gen.n, "Number of nodes (ws, er)")->capture_default_str();
  g->add_option("--k", gen.k, "Lattice degree, even (ws)")->capture_default_str();
  g->add_option("--beta", gen.beta, "Rewiring probability (ws)")->capture_default_str();
  g->add_option("--p", gen.p, "Edge probability (er)")->capture_default_str();
  g->add_option("--blocks", gen.blocks, "Comma-separated block sizes (sbm)")->capture_default_str();
  g->add_option("--p-in", gen.p_in, "Within-block edge probability (sbm)")->capture_default_str();
  g->add_option("--p-out", gen.p_out, "Between-block edge probability (sbm)")->capture_default_str();
  g->add_option("--feature-dim", gen.feature_dim, "Noisy class-conditional feature dimension (sbm); 0 keeps unit features")->capture_default_str();
  g->add_option("--signal", gen.signal, "Class mean norm for --feature-dim")->capture_default_str();
  g->add_option("--noise", gen.noise, "Per-coordinate noise for --feature-dim")->capture_default_str();
  g->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  g->add_option("--output,-o", gen.output, "Output file (default stdout)");

  std::string aug_in, aug_out;
  auto* a = app.add_subcommand("augment", "Write the augmented incidence graph as JSON");
  a->add_option("input", aug_in, "Graph JSON file")->required();
  a->add_option("--output,-o", aug_out, "Output file (default stdout)");

  std::string mask_in, mask_hops = "1,3,6,12", mask_out;
  auto* m = app.add_subcommand("masks", std::string("Build per-head reachability masks. ") + kHopNote);
  m->add_option("input", mask_in, "Graph JSON file")->required();
  m->add_option("--hops", mask_hops, "Comma-separated incidence-hop budget per head (menu: 1,3,6,12,24,48)")->capture_default_str();
  m->add_option("--output,-o", mask_out, "Output directory for mask dumps and mask_stats.json (default: stats to stdout)");

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", std::string("Train a model and write checkpoint, history CSV and manifest. ") + kHopNote);
  t->add_option("input", tr.input, "Graph JSON (node task) or dataset JSON array (graph task)")->required();
  t->add_option("--config,-c", tr.config, "Run-config JSON with optional 'model' and 'train' sections");
  t->add_option("--output,-o", tr.output, "Output directory")->capture_default_str();
  auto* seed_opt = t->add_option("--seed", train_seed, "Override model and train seeds");
  t->add_flag("--no-timing", tr.no_timing, "Write 0 seconds and null timestamps so reruns are byte-identical");

  std::string an_in, an_out;
  auto* an = app.add_subcommand("analyze", "Small-world report (clustering, path length) as CSV");
  an->add_option("input", an_in, "Graph or dataset JSON file")->required();
  an->add_option("--output,-o", an_out, "Output CSV (default stdout)");

  std::vector<std::string> fl_in;
  std::string fl_cfg, fl_hops = "3,6,12,24;3,3,6,12;3,3,3,6;3,3,3,3", fl_out;
  auto* f = app.add_subcommand("flops", std::string("FLOPs versus mask nnz report as CSV. ") + kHopNote);
  f->add_option("inputs", fl_in, "Graph or dataset JSON files")->required();
  f->add_option("--config,-c", fl_cfg, "Run-config JSON (model section used; default single layer)");
  f->add_option("--hop-configs", fl_hops, "Semicolon-separated list of comma-separated head hops")->capture_default_str();
  f->add_option("--output,-o", fl_out, "Output CSV (default stdout)");

  std::vector<std::string> argv_store{"hopformer"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (a->parsed()) return cmd_augment(aug_in, aug_out, out, err);
    if (m->parsed()) return cmd_masks(mask_in, mask_hops, mask_out, out, err);
    if (t->parsed()) {
      if (seed_opt->count() > 0) tr.seed = train_seed;
      return cmd_train(tr, out, err);
    }
    if (an->parsed()) return cmd_analyze(an_in, an_out, out, err);
    if (f->parsed()) return cmd_flops(fl_in, fl_cfg, fl_hops, fl_out, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const RuntimeAbort& e) {
    err << "aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace hopformer::cli
