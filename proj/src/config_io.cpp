// SPDX-License-Identifier: Apache-2.0
#include "hopformer/config_io.hpp"

#include <algorithm>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "hopformer/error.hpp"

namespace hopformer {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw InputError(section + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (known.count(item.key()) == 0) throw InputError(section + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
struct is_count_vector : std::false_type {};
template <typename U>
struct is_count_vector<std::vector<U>> : std::is_unsigned<U> {};

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  // nlohmann converts -1 into a huge unsigned value, so counts are checked first.
  const auto non_negative_integer = [](const json& x) { return x.is_number_unsigned(); };
  bool ok = true;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    ok = non_negative_integer(v);
  } else if constexpr (is_count_vector<T>::value) {
    ok = v.is_array() && std::all_of(v.begin(), v.end(), non_negative_integer);
  }
  if (!ok) throw InputError(section + ": field '" + key + "' must be a non-negative integer");
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(section + ": field '" + key + "' has the wrong type");
  }
}

json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"hidden_dim", c.hidden_dim},
          {"num_heads", c.num_heads},
          {"head_hops", c.head_hops},
          {"num_layers", c.num_layers},
          {"ffn_dim", c.ffn_dim},
          {"dropout", c.dropout},
          {"attention_dropout", c.attention_dropout},
          {"task", to_string(c.task)},
          {"readout", c.readout == Readout::sum ? "sum" : "mean"},
          {"num_classes", c.num_classes},
          {"output_dim", c.output_dim},
          {"norm", c.norm == NormPlacement::pre ? "pre" : "post"},
          {"layer_norm_eps", c.layer_norm_eps},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  const std::string s = "model config";
  reject_unknown(j, {"hidden_dim", "num_heads", "head_hops", "num_layers", "ffn_dim", "dropout",
                     "attention_dropout", "task", "readout", "num_classes", "output_dim", "norm",
                     "layer_norm_eps", "seed"},
                 s);
  ModelConfig c;
  read(j, "hidden_dim", c.hidden_dim, s);
  read(j, "num_heads", c.num_heads, s);
  read(j, "head_hops", c.head_hops, s);
  read(j, "num_layers", c.num_layers, s);
  read(j, "ffn_dim", c.ffn_dim, s);
  read(j, "dropout", c.dropout, s);
  read(j, "attention_dropout", c.attention_dropout, s);
  read(j, "num_classes", c.num_classes, s);
  read(j, "output_dim", c.output_dim, s);
  read(j, "layer_norm_eps", c.layer_norm_eps, s);
  read(j, "seed", c.seed, s);
  std::string text;
  if (j.contains("task")) {
    read(j, "task", text, s);
    c.task = task_from_string(text);
  }
  if (j.contains("readout")) {
    read(j, "readout", text, s);
    if (text != "mean" && text != "sum") throw InputError(s + ": readout must be 'mean' or 'sum'");
    c.readout = text == "sum" ? Readout::sum : Readout::mean;
  }
  if (j.contains("norm")) {
    read(j, "norm", text, s);
    if (text != "pre" && text != "post") throw InputError(s + ": norm must be 'pre' or 'post'");
    c.norm = text == "pre" ? NormPlacement::pre : NormPlacement::post;
  }
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"early_stop_patience", c.early_stop_patience},
          {"split", {c.train_fraction, c.val_fraction, c.test_fraction}}};
}

TrainConfig train_config_from_json(const json& j) {
  const std::string s = "train config";
  reject_unknown(j, {"learning_rate", "weight_decay", "epochs", "batch_size", "seed",
                     "early_stop_patience", "split"},
                 s);
  TrainConfig c;
  read(j, "learning_rate", c.learning_rate, s);
  read(j, "weight_decay", c.weight_decay, s);
  read(j, "epochs", c.epochs, s);
  read(j, "batch_size", c.batch_size, s);
  read(j, "seed", c.seed, s);
  read(j, "early_stop_patience", c.early_stop_patience, s);
  if (j.contains("split")) {
    std::vector<double> f;
    read(j, "split", f, s);
    if (f.size() != 3) throw InputError(s + ": split must list train, val and test fractions");
    c.train_fraction = f[0];
    c.val_fraction = f[1];
    c.test_fraction = f[2];
  }
  c.validate();
  return c;
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"model", "train"}, "run config");
  RunConfig rc;
  if (j.contains("model")) rc.model = model_config_from_json(j["model"]);
  if (j.contains("train")) rc.train = train_config_from_json(j["train"]);
  return rc;
}

json to_json(const RunConfig& cfg) { return {{"model", to_json(cfg.model)}, {"train", to_json(cfg.train)}}; }

json save_checkpoint(const Model& m) {
  json params = json::object();
  for (const auto& [name, t] : m.named_parameters()) params[name] = matrix_to_json(t.value());
  return {{"magic", kCheckpointMagic},
          {"config", to_json(m.config)},
          {"node_feature_dim", m.node_feature_dim},
          {"edge_feature_dim", m.edge_feature_dim},
          {"parameters", std::move(params)}};
}

Model load_checkpoint(const json& j) {
  if (!j.is_object() || !j.contains("magic") || j["magic"] != kCheckpointMagic) {
    throw InputError("checkpoint: missing or wrong magic string (expected " +
                     std::string(kCheckpointMagic) + ")");
  }
  try {
    Model m = init_model(model_config_from_json(j.at("config")), j.at("node_feature_dim").get<std::size_t>(),
                         j.at("edge_feature_dim").get<std::size_t>());
    const json& params = j.at("parameters");
    for (auto& [name, t] : m.named_parameters()) {
      if (!params.contains(name)) throw InputError("checkpoint: parameter '" + name + "' missing");
      const json& p = params[name];
      Matrix value(p.at("rows").get<std::size_t>(), p.at("cols").get<std::size_t>(),
                   p.at("data").get<std::vector<double>>());
      if (!value.same_shape(t.value())) throw InputError("checkpoint: parameter '" + name + "' mis-shaped");
      t.mutable_value() = std::move(value);
    }
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

std::uint64_t config_hash(const json& j) {
  const std::string canonical = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hopformer
