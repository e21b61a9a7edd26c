// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include <doctest.h>

#include "hierfuse/autodiff.hpp"
#include "hierfuse/errors.hpp"

using namespace hierfuse;

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

}  // namespace

TEST_CASE("d(sum x*x)/dx = 2x") {
  Tape tape;
  Var x = tape.param("x", Matrix::of({{3}}));
  Var loss = tape.sum(tape.hadamard(x, x));
  GradientStore grads = tape.backward(loss);
  CHECK(grads.at("x")(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("d(sum a*b)/da is ones * b^T") {
  std::mt19937_64 rng(21);
  const Matrix a_val = random_matrix(3, 4, rng);
  const Matrix b_val = random_matrix(4, 2, rng);
  Tape tape;
  Var a = tape.param("a", a_val);
  Var b = tape.param("b", b_val);
  GradientStore grads = tape.backward(tape.sum(tape.matmul(a, b)));

  const Matrix expected = matmul(Matrix::ones(3, 2), transpose(b_val));
  CHECK(max_abs_diff(grads.at("a"), expected) < 1e-12);
}

TEST_CASE("parameters off the loss path get zero gradients") {
  Tape tape;
  Var x = tape.param("x", Matrix::of({{2}}));
  Var unused = tape.param("unused", Matrix::of({{1, 2, 3}}));
  (void)unused;
  GradientStore grads = tape.backward(tape.sum(tape.tanh(x)));
  CHECK(grads.contains("unused"));
  CHECK(grads.at("unused").rows() == 1);
  CHECK(grads.at("unused").cols() == 3);
  CHECK(max_abs_diff(grads.at("unused"), Matrix(1, 3)) == 0.0);
}

TEST_CASE("backward rejects non-scalar losses and duplicate bindings") {
  Tape tape;
  Var x = tape.param("x", Matrix(2, 2));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  CHECK_THROWS_AS(tape.param("x", Matrix(1, 1)), ContractError);
}

TEST_CASE("finite differences: quadratic and tanh slopes") {
  Matrix x = Matrix::of({{3}});
  const ParamRef refs[] = {{"x", &x}};
  GradientStore fd = finite_diff_grad(refs, [&]() { return x(0, 0) * x(0, 0); }, 1e-5);
  CHECK(std::abs(fd.at("x")(0, 0) - 6.0) < 1e-9);

  Matrix t(1, 1);
  const ParamRef trefs[] = {{"t", &t}};
  GradientStore fd_tanh = finite_diff_grad(trefs, [&]() { return std::tanh(t(0, 0)); }, 1e-5);
  CHECK(std::abs(fd_tanh.at("t")(0, 0) - 1.0) < 1e-9);
  CHECK(t(0, 0) == 0.0);  // restored bit-exactly

  CHECK_THROWS_AS(finite_diff_grad(trefs, [&]() { return 0.0; }, 0.0), ContractError);
}

TEST_CASE("backward matches finite differences on a two-layer tanh net") {
  std::mt19937_64 rng(22);
  Matrix w1 = random_matrix(3, 4, rng);
  Matrix b1 = random_matrix(1, 4, rng, 0.1);
  Matrix w2 = random_matrix(4, 2, rng);
  const Matrix input = random_matrix(5, 3, rng);

  auto loss_value = [&]() {
    Tape tape;
    Var x = tape.input(input);
    Var hidden = tape.tanh(tape.add_rowvec(tape.matmul(x, tape.param("w1", w1)), tape.param("b1", b1)));
    Var out = tape.tanh(tape.matmul(hidden, tape.param("w2", w2)));
    return tape.sum(tape.hadamard(out, out)).value()(0, 0);
  };

  Tape tape;
  Var x = tape.input(input);
  Var hidden = tape.tanh(tape.add_rowvec(tape.matmul(x, tape.param("w1", w1)), tape.param("b1", b1)));
  Var out = tape.tanh(tape.matmul(hidden, tape.param("w2", w2)));
  GradientStore analytic = tape.backward(tape.sum(tape.hadamard(out, out)));

  const ParamRef refs[] = {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}};
  GradientStore numeric = finite_diff_grad(refs, loss_value, 1e-5);
  for (const auto& [name, grad] : analytic) CHECK(max_rel_err(grad, numeric.at(name)) < 1e-6);
}

TEST_CASE("softmax + masked NLL gradient matches finite differences") {
  std::mt19937_64 rng(23);
  Matrix logits_w = random_matrix(3, 4, rng);
  const Matrix input = random_matrix(6, 3, rng);
  const std::vector<int> labels = {0, 2, 1, 3, 0, 2};
  const std::vector<uint8_t> mask = {1, 1, 0, 1, 1, 0};

  auto build = [&](Tape& tape) {
    Var probs = tape.softmax_row(tape.matmul(tape.input(input), tape.param("w", logits_w)));
    return tape.scale(tape.masked_nll(probs, labels, mask), 1.0 / 4.0);
  };

  Tape tape;
  GradientStore analytic = tape.backward(build(tape));
  const ParamRef refs[] = {{"w", &logits_w}};
  GradientStore numeric = finite_diff_grad(
      refs,
      [&]() {
        Tape t2;
        return build(t2).value()(0, 0);
      },
      1e-5);
  CHECK(max_rel_err(analytic.at("w"), numeric.at("w")) < 1e-6);
}

TEST_CASE("masked NLL ignores masked-out rows entirely") {
  Matrix w = Matrix::of({{0.3, -0.2}, {0.1, 0.4}});
  const Matrix input = Matrix::of({{1.0, 2.0}, {0.5, -1.0}, {3.0, 3.0}});
  Tape tape;
  Var probs = tape.softmax_row(tape.matmul(tape.input(input), tape.param("w", w)));
  Var full = tape.masked_nll(probs, {0, 1, 0}, {1, 1, 0});

  Tape tape2;
  Var probs2 = tape2.softmax_row(tape2.matmul(tape2.input(input), tape2.param("w", w)));
  Var trimmed = tape2.masked_nll(probs2, {0, 1, 1}, {1, 1, 0});  // differs only at a masked row

  CHECK(full.value()(0, 0) == trimmed.value()(0, 0));
  GradientStore g1 = tape.backward(full);
  GradientStore g2 = tape2.backward(trimmed);
  CHECK(max_abs_diff(g1.at("w"), g2.at("w")) == 0.0);
}

TEST_CASE("concat and row slicing route gradients to the right slots") {
  std::mt19937_64 rng(24);
  Matrix a = random_matrix(2, 2, rng);
  Matrix b = random_matrix(2, 3, rng);

  Tape tape;
  Var va = tape.param("a", a);
  Var vb = tape.param("b", b);
  Var joined = tape.concat_cols({va, vb});
  // Loss touches only the second row: gradient of first-row entries must be 0.
  GradientStore grads = tape.backward(tape.sum(tape.hadamard(tape.row(joined, 1), tape.row(joined, 1))));

  for (int j = 0; j < 2; ++j) {
    CHECK(grads.at("a")(0, j) == 0.0);
    CHECK(grads.at("a")(1, j) == doctest::Approx(2.0 * a(1, j)).epsilon(1e-12));
  }
  for (int j = 0; j < 3; ++j) {
    CHECK(grads.at("b")(0, j) == 0.0);
    CHECK(grads.at("b")(1, j) == doctest::Approx(2.0 * b(1, j)).epsilon(1e-12));
  }
}
