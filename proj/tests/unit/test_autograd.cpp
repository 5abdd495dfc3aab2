// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "hopformer/autograd.hpp"
#include "hopformer/error.hpp"
#include "hopformer/flops.hpp"
#include "oracles.hpp"

using namespace hopformer;
using ag::Tape;
using ag::Tensor;

namespace {

Tensor random_param(Rng& rng, std::size_t r, std::size_t c) {
  return Tensor::parameter(oracle::random_matrix(rng, r, c));
}

// x -> sum(x * x) with a planted bug: the backward rule uses 3x instead of 2x.
Tensor corrupted_square_sum(Tape& t, const Tensor& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v * v;
  return t.record(Matrix(1, 1, total), {x}, [x](const Matrix& g) {
    Matrix& gx = x.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] += g(0, 0) * 3.0 * x.value().data()[i];
  });
}

}  // namespace

TEST_CASE("matmul with identity") {
  Rng rng(1);
  const Matrix x = oracle::random_matrix(rng, 3, 4);
  Tape t;
  const Tensor out = ag::matmul(t, Tensor::constant(Matrix::identity(3)), Tensor::constant(x));
  CHECK(out.value() == x);
  CHECK(t.empty());  // nothing requires grad
}

TEST_CASE("shape errors name both shapes") {
  Tape t;
  const Tensor a = Tensor::parameter(Matrix(2, 3));
  const Tensor b = Tensor::parameter(Matrix(2, 3));
  try {
    ag::matmul(t, a, b);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("(2x3)") != std::string::npos);
  }
  CHECK_THROWS_AS(ag::add(t, a, Tensor::parameter(Matrix(3, 2))), ShapeError);
  CHECK_THROWS_AS(ag::concat_cols(t, {a, Tensor::parameter(Matrix(3, 1))}), ShapeError);
}

TEST_CASE("layer_norm of a constant row") {
  Tape t;
  const Tensor x = Tensor::constant(Matrix(2, 4, 3.5));
  const Tensor gamma = Tensor::constant(Matrix::from_rows({{2, 2, 2, 2}}));
  const Tensor beta = Tensor::constant(Matrix::from_rows({{0.5, -1, 0, 1}}));
  const Tensor y = ag::layer_norm(t, x, gamma, beta, 1e-5);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(y.value()(r, c) == beta.value()(0, c));
  }
}

TEST_CASE("relu gradient") {
  Tape t;
  const Tensor x = Tensor::parameter(Matrix::from_rows({{-1.0, 2.0}}));
  t.backward(ag::sum(t, ag::relu(t, x)));
  CHECK(x.grad()(0, 0) == 0.0);
  CHECK(x.grad()(0, 1) == 1.0);
}

TEST_CASE("sum and matmul gradients") {
  Rng rng(2);
  {
    Tape t;
    const Tensor x = random_param(rng, 3, 2);
    t.backward(ag::sum(t, x));
    CHECK(x.grad() == Matrix(3, 2, 1.0));
  }
  {
    Tape t;
    const Tensor x = Tensor::constant(oracle::random_matrix(rng, 4, 3));
    const Tensor w = random_param(rng, 3, 2);
    t.backward(ag::sum(t, ag::matmul(t, x, w)));
    // grad(w) = x^T 1
    for (std::size_t i = 0; i < 3; ++i) {
      double col = 0.0;
      for (std::size_t r = 0; r < 4; ++r) col += x.value()(r, i);
      CHECK(w.grad()(i, 0) == doctest::Approx(col).epsilon(1e-14));
      CHECK(w.grad()(i, 1) == doctest::Approx(col).epsilon(1e-14));
    }
  }
}

TEST_CASE("backward contract") {
  Tape t;
  const Tensor x = Tensor::parameter(Matrix(2, 2, 1.0));
  const Tensor y = ag::scale(t, x, 2.0);
  CHECK_THROWS_AS(t.backward(y), ShapeError);  // not scalar
  const Tensor loss = ag::sum(t, y);
  t.backward(loss);
  CHECK(t.empty());  // cleared
  CHECK_THROWS(t.backward(loss));  // empty tape

  Tape other;
  const Tensor z = ag::sum(other, x);
  Tape third;
  ag::sum(third, x);
  CHECK_THROWS(third.backward(z));  // wrong tape
}

TEST_CASE("gradients accumulate across uses") {
  Tape t;
  const Tensor x = Tensor::parameter(Matrix::from_rows({{1.0, 2.0}}));
  t.backward(ag::sum(t, ag::add(t, x, x)));
  CHECK(x.grad() == Matrix(1, 2, 2.0));
}

TEST_CASE("grad_check on half squared norm") {
  Rng rng(3);
  const Tensor x = random_param(rng, 3, 3);
  const double err = ag::grad_check(
      [](Tape& t, const Tensor& v) { return ag::scale(t, ag::sum(t, ag::hadamard(t, v, v)), 0.5); }, x);
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check detects a corrupted backward rule") {
  Rng rng(4);
  Tensor x = Tensor::parameter(oracle::random_matrix(rng, 2, 3, 2.0));
  x.mutable_value()(0, 0) = 1.5;  // keep at least one coordinate away from zero
  const double err = ag::grad_check(corrupted_square_sum, x);
  CHECK(err > 1e-1);
}

TEST_CASE("finite differences agree for every primitive") {
  Rng rng(5);
  const Tensor a = random_param(rng, 4, 3);
  const Tensor b = random_param(rng, 3, 5);
  const Tensor c = random_param(rng, 4, 5);
  const Tensor bias = random_param(rng, 1, 5);
  const Tensor gamma = random_param(rng, 1, 5);
  const Tensor beta = random_param(rng, 1, 5);
  const auto f = [&](Tape& t) {
    Tensor h = ag::matmul(t, a, b);
    h = ag::add_bias(t, h, bias);
    h = ag::layer_norm(t, h, gamma, beta, 1e-5);
    h = ag::hadamard(t, h, c);
    h = ag::sub(t, h, ag::scale(t, c, 0.3));
    Tensor parts = ag::concat_cols(t, {h, ag::relu(t, c)});
    parts = ag::concat_rows(t, {parts, ag::slice_rows(t, parts, 1, 3)});
    parts = ag::slice_cols(t, parts, 2, 9);
    Tensor pooled = ag::add(t, ag::sum_rows(t, parts), ag::mean_rows(t, parts));
    return ag::sum(t, ag::hadamard(t, pooled, pooled));
  };
  for (double err : ag::grad_check(f, {a, b, c, bias, gamma, beta})) CHECK(err < 1e-6);
}

TEST_CASE("dropout semantics") {
  Rng rng(6);
  const Matrix x = oracle::random_matrix(rng, 20, 20);
  Tape t;
  const Tensor in = Tensor::parameter(x);
  CHECK(ag::dropout(t, in, 0.5, 1, false).value() == x);
  CHECK(ag::dropout(t, in, 0.0, 1, true).value() == x);
  const Tensor y1 = ag::dropout(t, in, 0.5, 9, true);
  const Tensor y2 = ag::dropout(t, in, 0.5, 9, true);
  CHECK(y1.value() == y2.value());
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = y1.value().data()[i];
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-15));
    }
  }
  CHECK(zeros > 150);
  CHECK(zeros < 250);
}

TEST_CASE("flop meter counts dense primitives and nests") {
  Tape t;
  const Tensor a = Tensor::constant(Matrix(3, 4, 1.0));
  const Tensor b = Tensor::constant(Matrix(4, 5, 1.0));
  ScopedFlopMeter outer;
  {
    ScopedFlopMeter inner;
    ag::matmul(t, a, b);
    CHECK(inner.tally().dense == 2 * 3 * 4 * 5);
  }
  ag::concat_cols(t, {a, a});
  CHECK(outer.tally().dense == 0);  // inner meter took the matmul, concat is free
  ag::relu(t, a);
  CHECK(outer.tally().dense == 12);
  CHECK(outer.tally().attention == 0);
}
