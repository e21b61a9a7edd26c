// SPDX-License-Identifier: Apache-2.0
#include "hierfuse/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "hierfuse/errors.hpp"

namespace hierfuse {

namespace {

[[noreturn]] void shape_error(const std::string& op, const Matrix& a, const Matrix& b,
                              const std::string& why) {
  throw DimensionError(op + ": " + a.shape_str() + " vs " + b.shape_str() + " (" + why + ")");
}

void require_same_shape(const std::string& op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) shape_error(op, a, b, "shapes must match");
}

void require_rowvec(const std::string& op, const Matrix& a, const Matrix& r) {
  if (r.rows() != 1 || r.cols() != a.cols()) shape_error(op, a, r, "expected a 1-row vector of matching width");
}

}  // namespace

Matrix::Matrix(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
  if (rows < 0 || cols < 0) throw DimensionError("Matrix: negative dimensions");
}

Matrix::Matrix(int rows, int cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (static_cast<long>(data_.size()) != size())
    throw DimensionError("Matrix: data length " + std::to_string(data_.size()) + " does not fill " + shape_str());
}

Matrix Matrix::zeros(int rows, int cols) { return Matrix(rows, cols); }

Matrix Matrix::ones(int rows, int cols) {
  Matrix m(rows, cols);
  std::fill(m.data_.begin(), m.data_.end(), 1.0);
  return m;
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::initializer_list<double> values) {
  return Matrix(1, static_cast<int>(values.size()), std::vector<double>(values));
}

Matrix Matrix::of(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
  Matrix m(r, c);
  int i = 0;
  for (const auto& rw : rows) {
    if (static_cast<int>(rw.size()) != c) throw DimensionError("Matrix::of: ragged rows");
    int j = 0;
    for (double v : rw) m(i, j++) = v;
    ++i;
  }
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b, "inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  const int n = a.rows(), k = a.cols(), m = b.cols();
  for (int i = 0; i < n; ++i) {
    double* out_row = &out(i, 0);
    for (int p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* b_row = &b(p, 0);
      for (int j = 0; j < m; ++j) out_row[j] += aip * b_row[j];
    }
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape("add", a, b);
  Matrix out = a;
  for (long i = 0; i < a.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape("sub", a, b);
  Matrix out = a;
  for (long i = 0; i < a.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix add_rowvec(const Matrix& a, const Matrix& row) {
  require_rowvec("add_rowvec", a, row);
  Matrix out = a;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(i, j) += row(0, j);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape("hadamard", a, b);
  Matrix out = a;
  for (long i = 0; i < a.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

Matrix mul_rowvec(const Matrix& a, const Matrix& row) {
  require_rowvec("mul_rowvec", a, row);
  Matrix out = a;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(i, j) *= row(0, j);
  return out;
}

Matrix scale(const Matrix& a, double k) {
  Matrix out = a;
  for (double& v : out.data()) v *= k;
  return out;
}

Matrix one_minus(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data()) v = 1.0 - v;
  return out;
}

Matrix tanh(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

Matrix sigmoid(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }
  return out;
}

Matrix softmax_row(const Matrix& a) {
  Matrix out = a;
  for (int i = 0; i < a.rows(); ++i) {
    double mx = out(i, 0);
    for (int j = 1; j < a.cols(); ++j) mx = std::max(mx, out(i, j));
    double total = 0.0;
    for (int j = 0; j < a.cols(); ++j) {
      out(i, j) = std::exp(out(i, j) - mx);
      total += out(i, j);
    }
    for (int j = 0; j < a.cols(); ++j) out(i, j) /= total;
  }
  return out;
}

Matrix concat_cols(const std::vector<Matrix>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const int rows = parts.front().rows();
  int cols = 0;
  for (const Matrix& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts.front(), p, "row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  int off = 0;
  for (const Matrix& p : parts) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < p.cols(); ++j) out(i, off + j) = p(i, j);
    off += p.cols();
  }
  return out;
}

Matrix vstack(const std::vector<Matrix>& parts) {
  if (parts.empty()) throw DimensionError("vstack: no parts");
  const int cols = parts.front().cols();
  int rows = 0;
  for (const Matrix& p : parts) {
    if (p.cols() != cols) shape_error("vstack", parts.front(), p, "column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  int off = 0;
  for (const Matrix& p : parts) {
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < cols; ++j) out(off + i, j) = p(i, j);
    off += p.rows();
  }
  return out;
}

Matrix row(const Matrix& a, int r) {
  if (r < 0 || r >= a.rows())
    throw DimensionError("row: index " + std::to_string(r) + " out of range for " + a.shape_str());
  Matrix out(1, a.cols());
  for (int j = 0; j < a.cols(); ++j) out(0, j) = a(r, j);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix colsum(const Matrix& a) {
  Matrix out(1, a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(0, j) += a(i, j);
  return out;
}

double sum_all(const Matrix& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return total;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape("max_abs_diff", a, b);
  double worst = 0.0;
  for (long i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

double max_rel_err(const Matrix& a, const Matrix& b) {
  require_same_shape("max_rel_err", a, b);
  double worst = 0.0;
  for (long i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    const double denom = std::max({std::abs(x), std::abs(y), 1e-8});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

}  // namespace hierfuse
