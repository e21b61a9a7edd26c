// SPDX-License-Identifier: Apache-2.0
#include "hierfuse/layers.hpp"

#include <cmath>

#include "hierfuse/errors.hpp"

namespace hierfuse {

Matrix glorot_uniform(int rows, int cols, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

DenseParams make_dense(int in_dim, int out_dim, Activation activation, std::mt19937_64& rng) {
  DenseParams p;
  p.weight = glorot_uniform(in_dim, out_dim, in_dim, out_dim, rng);
  p.bias = Matrix(1, out_dim);
  p.activation = activation;
  return p;
}

GruParams make_gru(int in_dim, int out_dim, std::mt19937_64& rng) {
  GruParams p;
  p.in_update = glorot_uniform(in_dim, out_dim, in_dim, out_dim, rng);
  p.in_reset = glorot_uniform(in_dim, out_dim, in_dim, out_dim, rng);
  p.in_cand = glorot_uniform(in_dim, out_dim, in_dim, out_dim, rng);
  p.rec_update = glorot_uniform(out_dim, out_dim, out_dim, out_dim, rng);
  p.rec_reset = glorot_uniform(out_dim, out_dim, out_dim, out_dim, rng);
  p.rec_cand = glorot_uniform(out_dim, out_dim, out_dim, out_dim, rng);
  p.out_proj = glorot_uniform(out_dim, out_dim, out_dim, out_dim, rng);
  p.out_bias = Matrix(1, out_dim);
  return p;
}

PairFusionParams make_pair_fusion(int dim, std::mt19937_64& rng) {
  PairFusionParams p;
  p.w_first = glorot_uniform(1, dim, 2, 1, rng);
  p.w_second = glorot_uniform(1, dim, 2, 1, rng);
  p.bias = Matrix(1, dim);
  return p;
}

TripleFusionParams make_triple_fusion(int dim, std::mt19937_64& rng) {
  TripleFusionParams p;
  p.w_first = glorot_uniform(1, dim, 3, 1, rng);
  p.w_second = glorot_uniform(1, dim, 3, 1, rng);
  p.w_third = glorot_uniform(1, dim, 3, 1, rng);
  p.bias = Matrix(1, dim);
  return p;
}

DenseVars bind_dense(Tape& tape, const DenseParams& p, const std::string& prefix) {
  return {tape.param(prefix + ".weight", p.weight), tape.param(prefix + ".bias", p.bias), p.activation};
}

Var dense_forward(Tape& tape, Var x, const DenseVars& p) {
  Var affine = tape.add_rowvec(tape.matmul(x, p.weight), p.bias);
  return p.activation == Activation::Tanh ? tape.tanh(affine) : affine;
}

GruVars bind_gru(Tape& tape, const GruParams& p, const std::string& prefix) {
  GruVars v;
  v.in_update = tape.param(prefix + ".in_update", p.in_update);
  v.in_reset = tape.param(prefix + ".in_reset", p.in_reset);
  v.in_cand = tape.param(prefix + ".in_cand", p.in_cand);
  v.rec_update = tape.param(prefix + ".rec_update", p.rec_update);
  v.rec_reset = tape.param(prefix + ".rec_reset", p.rec_reset);
  v.rec_cand = tape.param(prefix + ".rec_cand", p.rec_cand);
  v.out_proj = tape.param(prefix + ".out_proj", p.out_proj);
  v.out_bias = tape.param(prefix + ".out_bias", p.out_bias);
  return v;
}

Var gru_forward(Tape& tape, Var seq, const GruVars& p) {
  return gru_forward(tape, seq, p, tape.input(Matrix(1, p.in_update.value().cols())));
}

Var gru_forward(Tape& tape, Var seq, const GruVars& p, Var init_state) {
  const int n = seq.value().rows();
  const int in_dim = p.in_update.value().rows();
  const int out_dim = p.in_update.value().cols();
  if (seq.value().cols() != in_dim)
    throw DimensionError("gru_forward: input " + seq.value().shape_str() + " vs in x out " +
                         p.in_update.value().shape_str());
  if (init_state.value().rows() != 1 || init_state.value().cols() != out_dim)
    throw DimensionError("gru_forward: initial state " + init_state.value().shape_str() + " vs 1x" +
                         std::to_string(out_dim));

  Var state = init_state;
  std::vector<Var> outputs;
  outputs.reserve(n);
  for (int t = 0; t < n; ++t) {
    Var x = tape.row(seq, t);
    Var update = tape.sigmoid(tape.add(tape.matmul(x, p.in_update), tape.matmul(state, p.rec_update)));
    Var reset = tape.sigmoid(tape.add(tape.matmul(x, p.in_reset), tape.matmul(state, p.rec_reset)));
    Var cand = tape.tanh(
        tape.add(tape.matmul(x, p.in_cand), tape.matmul(tape.hadamard(state, reset), p.rec_cand)));
    Var out = tape.tanh(tape.add(tape.matmul(cand, p.out_proj), p.out_bias));
    // State blends the projected output, not the raw candidate.
    state = tape.add(tape.hadamard(tape.one_minus(update), out), tape.hadamard(update, state));
    outputs.push_back(out);
  }
  return tape.vstack(outputs);
}

PairFusionVars bind_pair_fusion(Tape& tape, const PairFusionParams& p, const std::string& prefix) {
  return {tape.param(prefix + ".w_first", p.w_first), tape.param(prefix + ".w_second", p.w_second),
          tape.param(prefix + ".bias", p.bias)};
}

Var bimodal_fuse(Tape& tape, Var a, Var b, const PairFusionVars& p) {
  Var mixed = tape.add(tape.mul_rowvec(a, p.w_first), tape.mul_rowvec(b, p.w_second));
  return tape.tanh(tape.add_rowvec(mixed, p.bias));
}

TripleFusionVars bind_triple_fusion(Tape& tape, const TripleFusionParams& p, const std::string& prefix) {
  return {tape.param(prefix + ".w_first", p.w_first), tape.param(prefix + ".w_second", p.w_second),
          tape.param(prefix + ".w_third", p.w_third), tape.param(prefix + ".bias", p.bias)};
}

Var trimodal_fuse(Tape& tape, Var a, Var b, Var c, const TripleFusionVars& p) {
  Var mixed = tape.add(tape.add(tape.mul_rowvec(a, p.w_first), tape.mul_rowvec(b, p.w_second)),
                       tape.mul_rowvec(c, p.w_third));
  return tape.tanh(tape.add_rowvec(mixed, p.bias));
}

Matrix dense_forward(const Matrix& x, const DenseParams& p) {
  Tape tape;
  return dense_forward(tape, tape.input(x), bind_dense(tape, p, "dense")).value();
}

Matrix gru_forward(const Matrix& seq, const GruParams& p) {
  Tape tape;
  return gru_forward(tape, tape.input(seq), bind_gru(tape, p, "gru")).value();
}

Matrix gru_forward(const Matrix& seq, const GruParams& p, const Matrix& init_state) {
  Tape tape;
  return gru_forward(tape, tape.input(seq), bind_gru(tape, p, "gru"), tape.input(init_state)).value();
}

Matrix bimodal_fuse(const Matrix& a, const Matrix& b, const PairFusionParams& p) {
  Tape tape;
  return bimodal_fuse(tape, tape.input(a), tape.input(b), bind_pair_fusion(tape, p, "pair")).value();
}

Matrix trimodal_fuse(const Matrix& a, const Matrix& b, const Matrix& c, const TripleFusionParams& p) {
  Tape tape;
  return trimodal_fuse(tape, tape.input(a), tape.input(b), tape.input(c),
                       bind_triple_fusion(tape, p, "triple"))
      .value();
}

}  // namespace hierfuse
