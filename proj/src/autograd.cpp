// SPDX-License-Identifier: Apache-2.0
#include "hopformer/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hopformer/error.hpp"
#include "hopformer/flops.hpp"
#include "hopformer/rng.hpp"

namespace hopformer::ag {
namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

// c += a * b
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* brow = b.data().data() + p * n;
      double* crow = c.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

// c += a * b^T
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data().data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data().data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) += s;
    }
  }
}

// c += a^T * b
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data().data() + p * m;
    const double* brow = b.data().data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      double* crow = c.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Tensor

Tensor Tensor::parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

double Tensor::item() const {
  if (value().size() != 1) throw ShapeError("item() on non-scalar " + value().shape_string());
  return value().data()[0];
}

Matrix& Tensor::grad_buffer() const {
  if (node_->grad.empty() || !node_->grad.same_shape(node_->value)) {
    node_->grad = Matrix(node_->value.rows(), node_->value.cols());
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) node_->grad.fill(0.0);
}

// ------------------------------------------------------------------ Tape

Tensor Tape::record(Matrix value, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  return record(std::move(value), std::vector<Tensor>(inputs), std::move(fn));
}

Tensor Tape::record(Matrix value, const std::vector<Tensor>& inputs, BackwardFn fn) {
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& x) { return x.defined() && x.requires_grad(); });
  if (!any) return Tensor::constant(std::move(value));
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->tape = this;
  node->tape_id = entries_.size();
  entries_.push_back({node, std::move(fn)});
  return Tensor(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward: loss must be a 1x1 tensor");
  }
  if (entries_.empty()) throw std::logic_error("backward: tape is empty");
  if (loss.node_->tape != this) throw std::logic_error("backward: loss was not recorded on this tape");
  loss.node_->grad = Matrix(1, 1, 1.0);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output->grad.empty()) it->backward(it->output->grad);
  }
  entries_.clear();
}

// ------------------------------------------------------------ primitives

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Matrix out(a.rows(), b.cols());
  gemm_nn(a.value(), b.value(), out);
  count_dense_flops(flop_cost::matmul(a.rows(), a.cols(), b.cols()));
  return t.record(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) gemm_nt(g, b.value(), a.grad_buffer());
    if (b.requires_grad()) gemm_tn(a.value(), g, b.grad_buffer());
  });
}

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Matrix out = a.value();
  out.add_in_place(b.value());
  count_dense_flops(flop_cost::elementwise(a.rows(), a.cols()));
  return t.record(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) a.grad_buffer().add_in_place(g);
    if (b.requires_grad()) b.grad_buffer().add_in_place(g);
  });
}

Tensor sub(Tape& t, const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) shape_error("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  count_dense_flops(flop_cost::elementwise(a.rows(), a.cols()));
  return t.record(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) a.grad_buffer().add_in_place(g);
    if (b.requires_grad()) {
      Matrix& gb = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
    }
  });
}

Tensor hadamard(Tape& t, const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) shape_error("hadamard", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  count_dense_flops(flop_cost::elementwise(a.rows(), a.cols()));
  return t.record(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) {
      Matrix& ga = a.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * b.value().data()[i];
    }
    if (b.requires_grad()) {
      Matrix& gb = b.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * a.value().data()[i];
    }
  });
}

Tensor add_bias(Tape& t, const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) shape_error("add_bias", x.value(), bias.value());
  Matrix out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias.value()(0, c);
  }
  count_dense_flops(flop_cost::elementwise(x.rows(), x.cols()));
  return t.record(std::move(out), {x, bias}, [x, bias](const Matrix& g) {
    if (x.requires_grad()) x.grad_buffer().add_in_place(g);
    if (bias.requires_grad()) {
      Matrix& gb = bias.grad_buffer();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
      }
    }
  });
}

Tensor scale(Tape& t, const Tensor& x, double s) {
  Matrix out = x.value();
  for (double& v : out.data()) v *= s;
  count_dense_flops(flop_cost::elementwise(x.rows(), x.cols()));
  return t.record(std::move(out), {x}, [x, s](const Matrix& g) {
    Matrix& gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx.data()[i] += s * g.data()[i];
  });
}

Tensor relu(Tape& t, const Tensor& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  count_dense_flops(flop_cost::elementwise(x.rows(), x.cols()));
  return t.record(std::move(out), {x}, [x](const Matrix& g) {
    Matrix& gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x.value().data()[i] > 0.0) gx.data()[i] += g.data()[i];
    }
  });
}

Tensor concat_cols(Tape& t, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(p.value().row(r).begin(), p.value().row(r).end(), out.row(r).begin() + offset);
    }
    offset += p.cols();
  }
  return t.record(std::move(out), parts, [parts](const Matrix& g) {
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      if (p.requires_grad()) {
        Matrix& gp = p.grad_buffer();
        for (std::size_t r = 0; r < gp.rows(); ++r) {
          for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, off + c);
        }
      }
      off += p.cols();
    }
  });
}

Tensor concat_rows(Tape& t, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const Tensor& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return t.record(Matrix(rows, cols, std::move(data)), parts, [parts](const Matrix& g) {
    std::size_t off = 0;
    for (const Tensor& p : parts) {
      if (p.requires_grad()) {
        Matrix& gp = p.grad_buffer();
        for (std::size_t i = 0; i < gp.size(); ++i) gp.data()[i] += g.data()[off + i];
      }
      off += p.value().size();
    }
  });
}

Tensor slice_rows(Tape& t, const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + x.value().shape_string());
  }
  const std::size_t cols = x.cols();
  std::vector<double> data(x.value().data().begin() + static_cast<std::ptrdiff_t>(begin * cols),
                           x.value().data().begin() + static_cast<std::ptrdiff_t>(end * cols));
  return t.record(Matrix(end - begin, cols, std::move(data)), {x}, [x, begin](const Matrix& g) {
    Matrix& gx = x.grad_buffer();
    const std::size_t off = begin * gx.cols();
    for (std::size_t i = 0; i < g.size(); ++i) gx.data()[off + i] += g.data()[i];
  });
}

Tensor slice_cols(Tape& t, const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + x.value().shape_string());
  }
  Matrix out(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = x.value()(r, c);
  }
  return t.record(std::move(out), {x}, [x, begin](const Matrix& g) {
    Matrix& gx = x.grad_buffer();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, begin + c) += g(r, c);
    }
  });
}

Tensor layer_norm(Tape& t, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != cols) shape_error("layer_norm gamma", x.value(), gamma.value());
  if (beta.rows() != 1 || beta.cols() != cols) shape_error("layer_norm beta", x.value(), beta.value());

  Matrix normalized(rows, cols);
  std::vector<double> inv_std(rows);
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += x.value()(r, c);
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = x.value()(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      normalized(r, c) = (x.value()(r, c) - mean) * inv_std[r];
      out(r, c) = normalized(r, c) * gamma.value()(0, c) + beta.value()(0, c);
    }
  }
  count_dense_flops(flop_cost::layer_norm(rows, cols));

  return t.record(std::move(out), {x, gamma, beta},
                  [x, gamma, beta, normalized = std::move(normalized),
                   inv_std = std::move(inv_std)](const Matrix& g) {
    const std::size_t n = g.cols();
    if (gamma.requires_grad() || beta.requires_grad()) {
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          if (gamma.requires_grad()) gamma.grad_buffer()(0, c) += g(r, c) * normalized(r, c);
          if (beta.requires_grad()) beta.grad_buffer()(0, c) += g(r, c);
        }
      }
    }
    if (!x.requires_grad()) return;
    Matrix& gx = x.grad_buffer();
    std::vector<double> dxhat(n);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        dxhat[c] = g(r, c) * gamma.value()(0, c);
        mean_d += dxhat[c];
        mean_dx += dxhat[c] * normalized(r, c);
      }
      mean_d /= static_cast<double>(n);
      mean_dx /= static_cast<double>(n);
      for (std::size_t c = 0; c < n; ++c) {
        gx(r, c) += inv_std[r] * (dxhat[c] - mean_d - normalized(r, c) * mean_dx);
      }
    }
  });
}

Tensor dropout(Tape& t, const Tensor& x, double rate, std::uint64_t seed, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix factor(x.rows(), x.cols());
  for (double& f : factor.data()) f = rng.bernoulli(rate) ? 0.0 : keep_scale;
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= factor.data()[i];
  count_dense_flops(flop_cost::elementwise(x.rows(), x.cols()));
  return t.record(std::move(out), {x}, [x, factor = std::move(factor)](const Matrix& g) {
    Matrix& gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx.data()[i] += g.data()[i] * factor.data()[i];
  });
}

Tensor sum(Tape& t, const Tensor& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  count_dense_flops(x.value().size());
  return t.record(Matrix(1, 1, s), {x}, [x](const Matrix& g) {
    Matrix& gx = x.grad_buffer();
    for (double& v : gx.data()) v += g(0, 0);
  });
}

Tensor sum_rows(Tape& t, const Tensor& x) {
  Matrix out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x.value()(r, c);
  }
  count_dense_flops(flop_cost::elementwise(x.rows(), x.cols()));
  return t.record(std::move(out), {x}, [x](const Matrix& g) {
    Matrix& gx = x.grad_buffer();
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g(0, c);
    }
  });
}

Tensor mean_rows(Tape& t, const Tensor& x) {
  if (x.rows() == 0) throw ShapeError("mean_rows: no rows");
  const double inv = 1.0 / static_cast<double>(x.rows());
  Matrix out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x.value()(r, c);
  }
  for (double& v : out.data()) v *= inv;
  count_dense_flops(flop_cost::elementwise(x.rows(), x.cols()) + x.cols());
  return t.record(std::move(out), {x}, [x, inv](const Matrix& g) {
    Matrix& gx = x.grad_buffer();
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += inv * g(0, c);
    }
  });
}

// ------------------------------------------------------------ grad check

std::vector<double> grad_check(const LossFn& f, std::vector<Tensor> wrt, double eps) {
  for (Tensor& x : wrt) x.zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  std::vector<double> errors;
  for (Tensor& x : wrt) {
    const Matrix analytic = x.has_grad() ? x.grad() : Matrix(x.rows(), x.cols());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.value().size(); ++i) {
      double& xi = x.mutable_value().data()[i];
      const double saved = xi;
      xi = saved + eps;
      double plus, minus;
      {
        Tape tape;
        plus = f(tape).item();
      }
      xi = saved - eps;
      {
        Tape tape;
        minus = f(tape).item();
      }
      xi = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic.data()[i];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    errors.push_back(worst);
  }
  return errors;
}

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x, double eps) {
  return grad_check([&](Tape& t) { return f(t, x); }, std::vector<Tensor>{x}, eps).front();
}

}  // namespace hopformer::ag
