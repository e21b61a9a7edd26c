// SPDX-License-Identifier: Apache-2.0
// Scalar-loop reference implementations, kept independent of the library's
// Matrix/tape code paths on purpose. Shared by the unit and acceptance suites.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "hierfuse/layers.hpp"
#include "hierfuse/matrix.hpp"

namespace oracles {

inline hierfuse::Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  hierfuse::Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

inline hierfuse::Matrix matmul_oracle(const hierfuse::Matrix& a, const hierfuse::Matrix& b) {
  hierfuse::Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

inline double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-by-scalar recurrence simulation of the context cell.
inline hierfuse::Matrix gru_oracle(const hierfuse::Matrix& f, const hierfuse::GruParams& p) {
  const int n = f.rows(), in = p.in_dim(), out = p.out_dim();
  std::vector<double> state(out, 0.0);
  hierfuse::Matrix result(n, out);
  for (int t = 0; t < n; ++t) {
    std::vector<double> update(out), reset(out), cand(out), projected(out);
    for (int j = 0; j < out; ++j) {
      double zu = 0.0, zr = 0.0;
      for (int k = 0; k < in; ++k) {
        zu += f(t, k) * p.in_update(k, j);
        zr += f(t, k) * p.in_reset(k, j);
      }
      for (int k = 0; k < out; ++k) {
        zu += state[k] * p.rec_update(k, j);
        zr += state[k] * p.rec_reset(k, j);
      }
      update[j] = sigmoid_scalar(zu);
      reset[j] = sigmoid_scalar(zr);
    }
    for (int j = 0; j < out; ++j) {
      double zc = 0.0;
      for (int k = 0; k < in; ++k) zc += f(t, k) * p.in_cand(k, j);
      for (int k = 0; k < out; ++k) zc += (state[k] * reset[k]) * p.rec_cand(k, j);
      cand[j] = std::tanh(zc);
    }
    for (int j = 0; j < out; ++j) {
      double zp = p.out_bias(0, j);
      for (int k = 0; k < out; ++k) zp += cand[k] * p.out_proj(k, j);
      projected[j] = std::tanh(zp);
      result(t, j) = projected[j];
    }
    for (int j = 0; j < out; ++j) state[j] = (1.0 - update[j]) * projected[j] + update[j] * state[j];
  }
  return result;
}

inline hierfuse::Matrix pair_oracle(const hierfuse::Matrix& a, const hierfuse::Matrix& b,
                                    const hierfuse::PairFusionParams& p) {
  hierfuse::Matrix out(a.rows(), a.cols());
  for (int t = 0; t < a.rows(); ++t)
    for (int l = 0; l < a.cols(); ++l)
      out(t, l) = std::tanh(p.w_first(0, l) * a(t, l) + p.w_second(0, l) * b(t, l) + p.bias(0, l));
  return out;
}

inline hierfuse::Matrix triple_oracle(const hierfuse::Matrix& a, const hierfuse::Matrix& b,
                                      const hierfuse::Matrix& c, const hierfuse::TripleFusionParams& p) {
  hierfuse::Matrix out(a.rows(), a.cols());
  for (int t = 0; t < a.rows(); ++t)
    for (int l = 0; l < a.cols(); ++l)
      out(t, l) = std::tanh(p.w_first(0, l) * a(t, l) + p.w_second(0, l) * b(t, l) +
                            p.w_third(0, l) * c(t, l) + p.bias(0, l));
  return out;
}

}  // namespace oracles
