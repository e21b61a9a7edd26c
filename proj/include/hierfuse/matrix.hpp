// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace hierfuse {

/// Dense 2-D array of doubles in row-major order. The single value type of
/// the engine; immutable by convention once handed to the tape.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);  // zero-filled
  Matrix(int rows, int cols, std::vector<double> data);

  static Matrix zeros(int rows, int cols);
  static Matrix ones(int rows, int cols);
  static Matrix identity(int n);
  static Matrix row_vector(std::initializer_list<double> values);
  static Matrix of(std::initializer_list<std::initializer_list<double>> rows);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  long size() const { return static_cast<long>(rows_) * cols_; }
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  const double& operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;
  std::string shape_str() const;  // e.g. "3x4"

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// Arithmetic. Shape mismatches throw DimensionError naming both shapes.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix add_rowvec(const Matrix& a, const Matrix& row);  // row broadcast against each row of a
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix mul_rowvec(const Matrix& a, const Matrix& row);  // per-column scaling by a 1-row vector
Matrix scale(const Matrix& a, double k);
Matrix one_minus(const Matrix& a);

// Elementwise nonlinearities.
Matrix tanh(const Matrix& a);
Matrix sigmoid(const Matrix& a);
// Rowwise softmax with max-subtraction; every output row sums to 1.
Matrix softmax_row(const Matrix& a);

// Structural ops.
Matrix concat_cols(const std::vector<Matrix>& parts);
Matrix vstack(const std::vector<Matrix>& parts);
Matrix row(const Matrix& a, int r);
Matrix transpose(const Matrix& a);
Matrix colsum(const Matrix& a);  // 1 x cols
double sum_all(const Matrix& a);

// Comparison helpers.
double max_abs_diff(const Matrix& a, const Matrix& b);
// Elementwise |a-b| / max(|a|, |b|, 1e-8), maximized over entries.
double max_rel_err(const Matrix& a, const Matrix& b);

}  // namespace hierfuse
