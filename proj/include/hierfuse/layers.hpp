// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <string>

#include "hierfuse/autodiff.hpp"
#include "hierfuse/matrix.hpp"

namespace hierfuse {

enum class Activation { Tanh, None };

// Glorot-uniform sample in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
Matrix glorot_uniform(int rows, int cols, int fan_in, int fan_out, std::mt19937_64& rng);

/// Affine map with optional tanh, rows processed independently.
struct DenseParams {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  Activation activation = Activation::Tanh;

  int in_dim() const { return weight.rows(); }
  int out_dim() const { return weight.cols(); }
};

DenseParams make_dense(int in_dim, int out_dim, Activation activation, std::mt19937_64& rng);

/// Recurrent context cell. Gated like a GRU, but the returned sequence is the
/// projected output tanh(candidate * out_proj + out_bias), and the hidden
/// state is updated with that projected output rather than the raw candidate.
struct GruParams {
  Matrix in_update, in_reset, in_cand;     // in x out
  Matrix rec_update, rec_reset, rec_cand;  // out x out
  Matrix out_proj;                         // out x out
  Matrix out_bias;                         // 1 x out

  int in_dim() const { return in_update.rows(); }
  int out_dim() const { return in_update.cols(); }
};

GruParams make_gru(int in_dim, int out_dim, std::mt19937_64& rng);

/// Per-column fusion of two equal-width streams: out[t][l] =
/// tanh(w_first[l]*a[t][l] + w_second[l]*b[t][l] + bias[l]). Weights are
/// shared across rows and distinct per column.
struct PairFusionParams {
  Matrix w_first, w_second, bias;  // each 1 x dim

  int dim() const { return bias.cols(); }
};

PairFusionParams make_pair_fusion(int dim, std::mt19937_64& rng);

/// Per-column fusion of three equal-width streams.
struct TripleFusionParams {
  Matrix w_first, w_second, w_third, bias;  // each 1 x dim

  int dim() const { return bias.cols(); }
};

TripleFusionParams make_triple_fusion(int dim, std::mt19937_64& rng);

// Tape bindings: one Var per parameter tensor, named "<prefix>.<field>".

struct DenseVars {
  Var weight, bias;
  Activation activation;
};
DenseVars bind_dense(Tape& tape, const DenseParams& p, const std::string& prefix);
Var dense_forward(Tape& tape, Var x, const DenseVars& p);

struct GruVars {
  Var in_update, in_reset, in_cand;
  Var rec_update, rec_reset, rec_cand;
  Var out_proj, out_bias;
};
GruVars bind_gru(Tape& tape, const GruParams& p, const std::string& prefix);
// Runs the cell over the rows of `seq` in order from an all-zero initial
// state and returns the N x out stack of projected outputs.
Var gru_forward(Tape& tape, Var seq, const GruVars& p);
Var gru_forward(Tape& tape, Var seq, const GruVars& p, Var init_state);

struct PairFusionVars {
  Var w_first, w_second, bias;
};
PairFusionVars bind_pair_fusion(Tape& tape, const PairFusionParams& p, const std::string& prefix);
Var bimodal_fuse(Tape& tape, Var a, Var b, const PairFusionVars& p);

struct TripleFusionVars {
  Var w_first, w_second, w_third, bias;
};
TripleFusionVars bind_triple_fusion(Tape& tape, const TripleFusionParams& p, const std::string& prefix);
Var trimodal_fuse(Tape& tape, Var a, Var b, Var c, const TripleFusionVars& p);

// Value-level entry points (scratch tape under the hood).
Matrix dense_forward(const Matrix& x, const DenseParams& p);
Matrix gru_forward(const Matrix& seq, const GruParams& p);
Matrix gru_forward(const Matrix& seq, const GruParams& p, const Matrix& init_state);
Matrix bimodal_fuse(const Matrix& a, const Matrix& b, const PairFusionParams& p);
Matrix trimodal_fuse(const Matrix& a, const Matrix& b, const Matrix& c, const TripleFusionParams& p);

}  // namespace hierfuse
