// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hierfuse/matrix.hpp"

namespace hierfuse {

// Probabilities are clamped here before any log; keeps saturated predictions
// out of -inf territory.
inline constexpr double kLogProbFloor = 1e-12;

class Tape;

/// Handle to a recorded node; cheap to copy, valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Matrix& value() const;
};

/// Gradients keyed by parameter name, in registration order. Parameters that
/// do not reach the loss keep all-zero gradients of the right shape.
class GradientStore {
 public:
  void set(const std::string& name, Matrix grad);
  bool contains(const std::string& name) const;
  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);

  void accumulate(const GradientStore& other);  // elementwise +=, shapes must agree
  void scale_all(double k);

  size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::pair<std::string, Matrix>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

/// Records forward operations on Matrix values and replays them in reverse to
/// accumulate exact gradients. A tape is confined to one thread; independent
/// passes run on disjoint tapes.
class Tape {
 public:
  enum class Op : uint8_t {
    Input,
    Param,
    MatMul,
    Add,
    AddRowVec,
    Hadamard,
    MulRowVec,
    OneMinus,
    Tanh,
    Sigmoid,
    SoftmaxRow,
    ConcatCols,
    VStack,
    Row,
    Sum,
    Scale,
    MaskedNll,
  };

  /// Constant leaf: participates in the graph, receives no gradient entry.
  Var input(Matrix value);
  /// Named parameter leaf. Each name may be bound at most once per tape.
  Var param(const std::string& name, const Matrix& value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_rowvec(Var a, Var row);
  Var hadamard(Var a, Var b);
  Var mul_rowvec(Var a, Var row);
  Var one_minus(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var softmax_row(Var a);
  Var concat_cols(const std::vector<Var>& parts);
  Var vstack(const std::vector<Var>& parts);
  Var row(Var a, int r);
  Var sum(Var a);
  Var scale(Var a, double k);

  /// 1x1 node holding sum over masked-in rows of -log(max(probs[t][label_t],
  /// kLogProbFloor)). The mean and the masked count are the caller's business.
  Var masked_nll(Var probs, std::vector<int> labels, std::vector<uint8_t> mask);

  /// Reverse accumulation from a scalar loss node. Returns gradients for every
  /// parameter registered on this tape (zeros for ones off the loss's path).
  GradientStore backward(Var loss) const;

  const Matrix& value(int id) const { return nodes_[id].value; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Op op;
    std::vector<int> parents;
    double factor = 0.0;           // Scale
    int row_index = 0;             // Row
    std::vector<int> labels;       // MaskedNll
    std::vector<uint8_t> mask;     // MaskedNll
    std::string name;              // Param
  };

  Var push(Node node);
  const Matrix& val(Var v) const;
  void check_binary(const char* op, Var a, Var b) const;

  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_ids_;
  std::vector<int> param_order_;
};

/// One scalar-parameter tensor to perturb during finite differencing.
struct ParamRef {
  std::string name;
  Matrix* value;
};

/// Central differences (f(x+eps) - f(x-eps)) / 2eps per scalar, restoring each
/// entry bit-exactly afterwards. `eval` must recompute the scalar from the
/// current parameter values.
GradientStore finite_diff_grad(std::span<const ParamRef> params, const std::function<double()>& eval,
                               double epsilon = 1e-5);

}  // namespace hierfuse
