// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <vector>

#include "hopformer/matrix.hpp"

namespace hopformer::ag {

inline constexpr std::size_t kNoTape = std::numeric_limits<std::size_t>::max();

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  const void* tape = nullptr;
  std::size_t tape_id = kNoTape;
};

/// Shared handle to a 2-D value taking part in a recorded computation.
/// Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  /// Trainable leaf; receives a gradient on backward.
  static Tensor parameter(Matrix value);
  /// Leaf that never receives a gradient.
  static Tensor constant(Matrix value);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient, or an empty matrix before any backward pass reached this tensor.
  const Matrix& grad() const { return node_->grad; }
  /// Gradient storage, zero-allocated on first use.
  Matrix& grad_buffer() const;
  void zero_grad();

  std::size_t tape_id() const { return node_->tape_id; }
  const Node* id() const { return node_.get(); }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Ordered record of primitive applications. Backward replays the entries
/// in exact reverse order of recording.
class Tape {
 public:
  using BackwardFn = std::function<void(const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Wraps `value` as the output of a primitive over `inputs`. Nothing is
  /// recorded when no input requires a gradient; the result is then a
  /// constant. `fn` must accumulate into the inputs' grad_buffer().
  Tensor record(Matrix value, std::initializer_list<Tensor> inputs, BackwardFn fn);
  Tensor record(Matrix value, const std::vector<Tensor>& inputs, BackwardFn fn);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  /// Seeds d(loss)/d(loss) = 1, runs every backward rule in reverse, then
  /// clears the tape. Throws if loss is not 1x1, not recorded here, or the
  /// tape is empty.
  void backward(const Tensor& loss);

 private:
  struct Entry {
    std::shared_ptr<Node> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

// Dense primitives. All throw ShapeError naming both shapes on mismatch.
Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor sub(Tape& t, const Tensor& a, const Tensor& b);
Tensor hadamard(Tape& t, const Tensor& a, const Tensor& b);
/// x (m x n) + bias (1 x n) broadcast over rows.
Tensor add_bias(Tape& t, const Tensor& x, const Tensor& bias);
Tensor scale(Tape& t, const Tensor& x, double s);
Tensor relu(Tape& t, const Tensor& x);
Tensor concat_cols(Tape& t, const std::vector<Tensor>& parts);
Tensor concat_rows(Tape& t, const std::vector<Tensor>& parts);
Tensor slice_rows(Tape& t, const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(Tape& t, const Tensor& x, std::size_t begin, std::size_t end);
/// Row-wise normalisation over columns, then gamma/beta (each 1 x n).
Tensor layer_norm(Tape& t, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
/// Inverted dropout. Identity (and unrecorded) when !training or rate == 0.
Tensor dropout(Tape& t, const Tensor& x, double rate, std::uint64_t seed, bool training);
/// Sum of all entries, 1 x 1.
Tensor sum(Tape& t, const Tensor& x);
/// Column sums, 1 x n.
Tensor sum_rows(Tape& t, const Tensor& x);
/// Column means, 1 x n.
Tensor mean_rows(Tape& t, const Tensor& x);

/// Builds a scalar loss on a fresh tape.
using LossFn = std::function<Tensor(Tape&)>;

/// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
/// with central differences of step eps, one entry per tensor in `wrt`.
std::vector<double> grad_check(const LossFn& f, std::vector<Tensor> wrt, double eps = 1e-5);

/// Single-input convenience form.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x,
                  double eps = 1e-5);

}  // namespace hopformer::ag
