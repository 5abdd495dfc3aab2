// SPDX-License-Identifier: Apache-2.0
#include "hopformer/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hopformer/error.hpp"
#include "hopformer/rng.hpp"

namespace hopformer {
namespace {

using ag::Tape;
using ag::Tensor;

void check_finite_loss(double loss, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw RuntimeAbort("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                       std::to_string(step));
  }
}

int class_label(const Graph& g, std::size_t index, std::size_t num_classes) {
  if (!g.graph_label) throw InputError("graph " + std::to_string(index) + " has no graph_label");
  const double y = *g.graph_label;
  if (y != std::floor(y) || y < 0 || y >= static_cast<double>(num_classes)) {
    throw InputError("graph " + std::to_string(index) + " label " + std::to_string(y) +
                     " is not a class index below " + std::to_string(num_classes));
  }
  return static_cast<int>(y);
}

Matrix node_logits(const Model& m, const NodeDataset& ds) {
  Tape t;
  const Tensor h = forward(t, m, ds.graph, ds.augmented, ds.masks);
  return predict_node(t, m, h, ds.graph.num_nodes).value();
}

Matrix graph_output(const Model& m, const GraphSample& s) {
  Tape t;
  const Tensor h = forward(t, m, s.graph, s.augmented, s.masks);
  return predict_graph(t, m, readout(t, h, m.config.readout)).value();
}

double accuracy_on(const Matrix& logits, const std::vector<int>& labels,
                   const std::vector<std::size_t>& indices) {
  const auto pred = argmax_rows(logits);
  std::size_t hits = 0;
  for (std::size_t i : indices) hits += pred[i] == static_cast<std::size_t>(labels[i]);
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

const std::vector<std::size_t>& part_indices(const Split& s, SplitPart part) {
  switch (part) {
    case SplitPart::train: return s.train;
    case SplitPart::val: return s.val;
    case SplitPart::test: return s.test;
  }
  return s.test;
}

bool improves(double candidate, double best, bool higher_is_better) {
  return higher_is_better ? candidate > best : candidate < best;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start, bool record_time) {
  if (!record_time) return 0.0;
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Mean cross-entropy of `logits` rows at `indices`; used only to break ties
// between epochs with equal validation accuracy.
double mean_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                          const std::vector<std::size_t>& indices) {
  double total = 0.0;
  for (std::size_t i : indices) {
    double mx = logits(i, 0);
    for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, logits(i, c));
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(i, c) - mx);
    total += std::log(z) + mx - logits(i, static_cast<std::size_t>(labels[i]));
  }
  return total / static_cast<double>(indices.size());
}

// Shared bookkeeping for both training loops: best-epoch selection on the
// validation metric and patience-based stopping. Equal metrics are ordered
// by validation loss, lower first.
struct Selector {
  bool higher_is_better;
  std::size_t patience;
  double best = 0.0;
  double best_loss = 0.0;
  std::size_t since_best = 0;
  bool have_best = false;
  std::vector<Matrix> best_params{};

  // Returns true when training should stop.
  bool update(const Model& m, RunHistory& h, double val, double val_loss) {
    const std::size_t epoch = h.epochs.back().epoch;
    if (std::isnan(val)) {
      best_params = m.snapshot();
      h.best_epoch = epoch;
      return false;
    }
    const bool better = !have_best || improves(val, best, higher_is_better) ||
                        (val == best && val_loss < best_loss);
    if (better) {
      best = val;
      best_loss = val_loss;
      have_best = true;
      since_best = 0;
      best_params = m.snapshot();
      h.best_epoch = epoch;
      return false;
    }
    return ++since_best >= patience;
  }
};

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InputError("learning_rate must be a finite non-negative number");
  }
  if (!(weight_decay >= 0.0)) throw InputError("weight_decay must be non-negative");
  if (batch_size == 0) throw InputError("batch_size must be positive");
  for (double f : {train_fraction, val_fraction, test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw InputError("split fractions must lie in [0, 1]");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw InputError("split fractions must sum to 1");
  }
}

Tensor cross_entropy(Tape& t, const Tensor& logits, const std::vector<int>& labels,
                     const std::vector<bool>& selected) {
  const std::size_t rows = logits.rows(), classes = logits.cols();
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  if (!selected.empty() && selected.size() != rows) {
    throw ShapeError("cross_entropy: selection mask length " + std::to_string(selected.size()) +
                     " for " + std::to_string(rows) + " rows");
  }
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!selected.empty() && !selected[r]) continue;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw InputError("cross_entropy: label " + std::to_string(labels[r]) + " at row " +
                       std::to_string(r) + " outside [0, " + std::to_string(classes) + ")");
    }
    ++count;
  }
  if (count == 0) throw InputError("cross_entropy: no rows selected");

  const Matrix& x = logits.value();
  Matrix probs(rows, classes);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!selected.empty() && !selected[r]) continue;
    double mx = x(r, 0);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, x(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(x(r, c) - mx);
    for (std::size_t c = 0; c < classes; ++c) probs(r, c) = std::exp(x(r, c) - mx) / z;
    total += std::log(z) + mx - x(r, static_cast<std::size_t>(labels[r]));
  }
  const double inv = 1.0 / static_cast<double>(count);
  return t.record(Matrix(1, 1, total * inv), {logits},
                  [logits, labels, selected, probs = std::move(probs), inv](const Matrix& g) {
    Matrix& gl = logits.grad_buffer();
    for (std::size_t r = 0; r < gl.rows(); ++r) {
      if (!selected.empty() && !selected[r]) continue;
      for (std::size_t c = 0; c < gl.cols(); ++c) {
        const double target = static_cast<int>(c) == labels[r] ? 1.0 : 0.0;
        gl(r, c) += g(0, 0) * inv * (probs(r, c) - target);
      }
    }
  });
}

Tensor mae(Tape& t, const Tensor& pred, const std::vector<double>& target) {
  if (pred.value().size() != target.size() || (pred.rows() != 1 && pred.cols() != 1)) {
    throw ShapeError("mae: prediction " + pred.value().shape_string() + " vs " +
                     std::to_string(target.size()) + " targets");
  }
  if (target.empty()) throw ShapeError("mae: empty input");
  const double inv = 1.0 / static_cast<double>(target.size());
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) total += std::abs(pred.value().data()[i] - target[i]);
  return t.record(Matrix(1, 1, total * inv), {pred}, [pred, target, inv](const Matrix& g) {
    Matrix& gp = pred.grad_buffer();
    for (std::size_t i = 0; i < target.size(); ++i) {
      const double diff = pred.value().data()[i] - target[i];
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      gp.data()[i] += g(0, 0) * inv * sign;
    }
  });
}

void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamOptions& opts) {
  if (state.first_moment.empty()) {
    for (const Tensor& p : params) {
      state.first_moment.emplace_back(p.rows(), p.cols());
      state.second_moment.emplace_back(p.rows(), p.cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter list");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = params[i].mutable_value();
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    const bool has_grad = params[i].has_grad();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = has_grad ? params[i].grad().data()[k] : 0.0;
      double& mk = m.data()[k];
      double& vk = v.data()[k];
      mk = opts.beta1 * mk + (1.0 - opts.beta1) * g;
      vk = opts.beta2 * vk + (1.0 - opts.beta2) * g * g;
      const double update = (mk / c1) / (std::sqrt(vk / c2) + opts.eps);
      w.data()[k] -= opts.learning_rate * (update + opts.weight_decay * w.data()[k]);
    }
  }
}

Split random_split(std::size_t n, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0x5911));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);

  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n))));
  Split s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train)));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(s.train.size()),
               perm.begin() + static_cast<std::ptrdiff_t>(s.train.size() + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(s.train.size() + n_val), perm.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

NodeDataset prepare_node_dataset(Graph g, const std::vector<std::size_t>& head_hops,
                                 const TrainConfig& cfg, std::optional<Split> split) {
  if (!g.node_labels) throw InputError("node task requires node_labels");
  NodeDataset ds;
  ds.augmented = augment(g);
  ds.masks = build_head_masks(ds.augmented, head_hops);
  ds.split = split ? *split : random_split(g.num_nodes, cfg);
  for (const auto* part : {&ds.split.train, &ds.split.val, &ds.split.test}) {
    for (std::size_t i : *part) {
      if (i >= g.num_nodes) throw InputError("split index " + std::to_string(i) + " out of range");
    }
  }
  ds.graph = std::move(g);
  return ds;
}

GraphDataset prepare_graph_dataset(std::vector<Graph> graphs, const std::vector<std::size_t>& head_hops,
                                   const TrainConfig& cfg, std::optional<Split> split) {
  if (graphs.empty()) throw InputError("graph dataset is empty");
  GraphDataset ds;
  ds.split = split ? *split : random_split(graphs.size(), cfg);
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (!graphs[i].graph_label) throw InputError("graph " + std::to_string(i) + " has no graph_label");
    GraphSample s;
    s.augmented = augment(graphs[i]);
    MaskCache cache(s.augmented);
    s.masks = cache.heads(head_hops);
    s.graph = std::move(graphs[i]);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Metrics evaluate(const Model& m, const NodeDataset& ds, SplitPart part) {
  const auto& idx = part_indices(ds.split, part);
  if (idx.empty()) throw InputError("evaluate: split is empty");
  return {"accuracy", accuracy_on(node_logits(m, ds), *ds.graph.node_labels, idx), idx.size()};
}

Metrics evaluate(const Model& m, const GraphDataset& ds, SplitPart part) {
  return evaluate(m, ds, part_indices(ds.split, part));
}

Metrics evaluate(const Model& m, const GraphDataset& ds, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InputError("evaluate: split is empty");
  const bool regression = m.config.task == Task::graph_regression;
  double total = 0.0;
  for (std::size_t i : indices) {
    const GraphSample& s = ds.samples.at(i);
    const Matrix out = graph_output(m, s);
    if (regression) {
      total += std::abs(out(0, 0) - *s.graph.graph_label);
    } else {
      const int y = class_label(s.graph, i, m.config.num_classes);
      total += argmax_rows(out)[0] == static_cast<std::size_t>(y) ? 1.0 : 0.0;
    }
  }
  return {regression ? "mae" : "accuracy", total / static_cast<double>(indices.size()), indices.size()};
}

TrainResult train(const Model& init, const NodeDataset& ds, const TrainConfig& cfg, bool record_time) {
  cfg.validate();
  if (init.config.task != Task::node_classification) {
    throw InputError("dataset is node-level but the model task is " + to_string(init.config.task));
  }
  if (ds.split.train.empty()) throw InputError("train split is empty");
  TrainResult result{init.clone(), {}};
  Model& model = result.model;
  RunHistory& history = result.history;
  history.metric_name = "accuracy";

  std::vector<Tensor> params = model.parameters();
  AdamState state;
  const AdamOptions adam{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay};
  std::vector<bool> selected(ds.graph.num_nodes, false);
  for (std::size_t i : ds.split.train) selected[i] = true;
  const std::vector<int>& labels = *ds.graph.node_labels;

  Selector selector{true, cfg.early_stop_patience};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = Clock::now();
    double loss_value;
    {
      Tape t;
      const ForwardOptions fo{true, derive_seed(cfg.seed, epoch), nullptr};
      const Tensor h = forward(t, model, ds.graph, ds.augmented, ds.masks, fo);
      const Tensor loss = cross_entropy(t, predict_node(t, model, h, ds.graph.num_nodes), labels, selected);
      loss_value = loss.item();
      check_finite_loss(loss_value, epoch, 0);
      for (Tensor& p : params) p.zero_grad();
      t.backward(loss);
    }
    adam_step(params, state, adam);

    const Matrix logits = node_logits(model, ds);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_value;
    rec.val_metric = ds.split.val.empty() ? std::nan("") : accuracy_on(logits, labels, ds.split.val);
    rec.test_metric = ds.split.test.empty() ? std::nan("") : accuracy_on(logits, labels, ds.split.test);
    rec.seconds = seconds_since(start, record_time);
    history.epochs.push_back(rec);
    const double val_loss = ds.split.val.empty() ? 0.0 : mean_cross_entropy(logits, labels, ds.split.val);
    if (selector.update(model, history, rec.val_metric, val_loss)) break;
  }
  if (!selector.best_params.empty()) model.restore(selector.best_params);
  return result;
}

TrainResult train(const Model& init, const GraphDataset& ds, const TrainConfig& cfg, bool record_time) {
  cfg.validate();
  const Task task = init.config.task;
  if (task == Task::node_classification) {
    throw InputError("dataset is graph-level but the model task is node_classification");
  }
  if (ds.split.train.empty()) throw InputError("train split is empty");
  const bool regression = task == Task::graph_regression;
  // Validate labels up front so a bad file fails before any update.
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (!regression) class_label(ds.samples[i].graph, i, init.config.num_classes);
  }

  TrainResult result{init.clone(), {}};
  Model& model = result.model;
  RunHistory& history = result.history;
  history.metric_name = regression ? "mae" : "accuracy";

  std::vector<Tensor> params = model.parameters();
  AdamState state;
  const AdamOptions adam{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay};

  Selector selector{!regression, cfg.early_stop_patience};
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = Clock::now();
    std::vector<std::size_t> order = ds.split.train;
    Rng rng(derive_seed(cfg.seed, 0x0b00 + epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - b);
      for (Tensor& p : params) p.zero_grad();
      for (std::size_t k = b; k < end; ++k) {
        const GraphSample& s = ds.samples[order[k]];
        Tape t;
        const ForwardOptions fo{true, derive_seed(cfg.seed, step * 4099 + k), nullptr};
        const Tensor h = forward(t, model, s.graph, s.augmented, s.masks, fo);
        const Tensor pred = predict_graph(t, model, readout(t, h, model.config.readout));
        const Tensor loss =
            regression ? mae(t, pred, std::vector<double>(pred.value().size(), *s.graph.graph_label))
                       : cross_entropy(t, pred, {class_label(s.graph, order[k], model.config.num_classes)});
        check_finite_loss(loss.item(), epoch, step);
        epoch_loss += loss.item();
        t.backward(ag::scale(t, loss, inv));
      }
      adam_step(params, state, adam);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.val_metric = ds.split.val.empty() ? std::nan("") : evaluate(model, ds, ds.split.val).value;
    rec.test_metric = ds.split.test.empty() ? std::nan("") : evaluate(model, ds, ds.split.test).value;
    rec.seconds = seconds_since(start, record_time);
    history.epochs.push_back(rec);
    double val_loss = 0.0;
    if (!regression) {
      for (std::size_t i : ds.split.val) {
        const Matrix logits = graph_output(model, ds.samples[i]);
        val_loss += mean_cross_entropy(logits, {class_label(ds.samples[i].graph, i, model.config.num_classes)}, {0});
      }
      if (!ds.split.val.empty()) val_loss /= static_cast<double>(ds.split.val.size());
    }
    if (selector.update(model, history, rec.val_metric, val_loss)) break;
  }
  if (!selector.best_params.empty()) model.restore(selector.best_params);
  return result;
}

}  // namespace hopformer
