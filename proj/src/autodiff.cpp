// SPDX-License-Identifier: Apache-2.0
#include "hierfuse/autodiff.hpp"

#include <cmath>

#include "hierfuse/errors.hpp"

namespace hierfuse {

const Matrix& Var::value() const { return tape->value(id); }

void GradientStore::set(const std::string& name, Matrix grad) {
  auto it = index_.find(name);
  if (it != index_.end()) {
    entries_[it->second].second = std::move(grad);
    return;
  }
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(grad));
}

bool GradientStore::contains(const std::string& name) const { return index_.count(name) != 0; }

const Matrix& GradientStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("GradientStore: no gradient named '" + name + "'");
  return entries_[it->second].second;
}

Matrix& GradientStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("GradientStore: no gradient named '" + name + "'");
  return entries_[it->second].second;
}

void GradientStore::accumulate(const GradientStore& other) {
  for (const auto& [name, grad] : other) {
    if (!contains(name)) {
      set(name, grad);
      continue;
    }
    Matrix& mine = at(name);
    if (!mine.same_shape(grad))
      throw DimensionError("GradientStore::accumulate: '" + name + "' " + mine.shape_str() + " vs " +
                           grad.shape_str());
    for (long i = 0; i < mine.size(); ++i) mine.data()[i] += grad.data()[i];
  }
}

void GradientStore::scale_all(double k) {
  for (auto& [name, grad] : entries_)
    for (double& v : grad.data()) v *= k;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::val(Var v) const {
  if (v.tape != this) throw ContractError("Tape: node belongs to a different tape");
  return nodes_[v.id].value;
}

void Tape::check_binary(const char* op, Var a, Var b) const {
  val(a);
  val(b);
  (void)op;
}

Var Tape::input(Matrix value) { return push({std::move(value), Op::Input, {}}); }

Var Tape::param(const std::string& name, const Matrix& value) {
  if (param_ids_.count(name))
    throw ContractError("Tape: parameter '" + name + "' bound twice");
  Var v = push({value, Op::Param, {}});
  nodes_[v.id].name = name;
  param_ids_.emplace(name, v.id);
  param_order_.push_back(v.id);
  return v;
}

Var Tape::matmul(Var a, Var b) {
  check_binary("matmul", a, b);
  return push({hierfuse::matmul(val(a), val(b)), Op::MatMul, {a.id, b.id}});
}

Var Tape::add(Var a, Var b) {
  check_binary("add", a, b);
  return push({hierfuse::add(val(a), val(b)), Op::Add, {a.id, b.id}});
}

Var Tape::add_rowvec(Var a, Var row) {
  check_binary("add_rowvec", a, row);
  return push({hierfuse::add_rowvec(val(a), val(row)), Op::AddRowVec, {a.id, row.id}});
}

Var Tape::hadamard(Var a, Var b) {
  check_binary("hadamard", a, b);
  return push({hierfuse::hadamard(val(a), val(b)), Op::Hadamard, {a.id, b.id}});
}

Var Tape::mul_rowvec(Var a, Var row) {
  check_binary("mul_rowvec", a, row);
  return push({hierfuse::mul_rowvec(val(a), val(row)), Op::MulRowVec, {a.id, row.id}});
}

Var Tape::one_minus(Var a) { return push({hierfuse::one_minus(val(a)), Op::OneMinus, {a.id}}); }

Var Tape::tanh(Var a) { return push({hierfuse::tanh(val(a)), Op::Tanh, {a.id}}); }

Var Tape::sigmoid(Var a) { return push({hierfuse::sigmoid(val(a)), Op::Sigmoid, {a.id}}); }

Var Tape::softmax_row(Var a) { return push({hierfuse::softmax_row(val(a)), Op::SoftmaxRow, {a.id}}); }

Var Tape::concat_cols(const std::vector<Var>& parts) {
  std::vector<Matrix> values;
  std::vector<int> ids;
  values.reserve(parts.size());
  for (Var p : parts) {
    values.push_back(val(p));
    ids.push_back(p.id);
  }
  return push({hierfuse::concat_cols(values), Op::ConcatCols, std::move(ids)});
}

Var Tape::vstack(const std::vector<Var>& parts) {
  std::vector<Matrix> values;
  std::vector<int> ids;
  values.reserve(parts.size());
  for (Var p : parts) {
    values.push_back(val(p));
    ids.push_back(p.id);
  }
  return push({hierfuse::vstack(values), Op::VStack, std::move(ids)});
}

Var Tape::row(Var a, int r) {
  Var v = push({hierfuse::row(val(a), r), Op::Row, {a.id}});
  nodes_[v.id].row_index = r;
  return v;
}

Var Tape::sum(Var a) {
  Matrix s(1, 1);
  s(0, 0) = sum_all(val(a));
  return push({std::move(s), Op::Sum, {a.id}});
}

Var Tape::scale(Var a, double k) {
  Var v = push({hierfuse::scale(val(a), k), Op::Scale, {a.id}});
  nodes_[v.id].factor = k;
  return v;
}

Var Tape::masked_nll(Var probs, std::vector<int> labels, std::vector<uint8_t> mask) {
  const Matrix& p = val(probs);
  if (static_cast<int>(labels.size()) != p.rows() || static_cast<int>(mask.size()) != p.rows())
    throw ContractError("masked_nll: labels/mask length " + std::to_string(labels.size()) + "/" +
                        std::to_string(mask.size()) + " vs " + std::to_string(p.rows()) + " rows");
  double total = 0.0;
  for (int t = 0; t < p.rows(); ++t) {
    if (!mask[t]) continue;
    if (labels[t] < 0 || labels[t] >= p.cols())
      throw ContractError("masked_nll: label " + std::to_string(labels[t]) + " outside [0, " +
                          std::to_string(p.cols()) + ")");
    total += -std::log(std::max(p(t, labels[t]), kLogProbFloor));
  }
  Matrix s(1, 1);
  s(0, 0) = total;
  Var v = push({std::move(s), Op::MaskedNll, {probs.id}});
  nodes_[v.id].labels = std::move(labels);
  nodes_[v.id].mask = std::move(mask);
  return v;
}

GradientStore Tape::backward(Var loss) const {
  const Matrix& l = val(loss);
  if (l.rows() != 1 || l.cols() != 1)
    throw ContractError("backward: loss node must be 1x1, got " + l.shape_str());

  // Adjoints stay unallocated until a node actually receives gradient; nodes
  // off the loss's path are skipped entirely.
  std::vector<Matrix> adj(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  auto bump = [&](int id, int r, int c, auto&& fn) {
    if (!live[id]) {
      adj[id] = Matrix(r, c);
      live[id] = true;
    }
    fn(adj[id]);
  };

  adj[loss.id] = Matrix::ones(1, 1);
  live[loss.id] = true;

  for (int id = loss.id; id >= 0; --id) {
    if (!live[id]) continue;
    const Node& n = nodes_[id];
    const Matrix& g = adj[id];
    switch (n.op) {
      case Op::Input:
      case Op::Param:
        break;
      case Op::MatMul: {
        const Matrix& a = nodes_[n.parents[0]].value;
        const Matrix& b = nodes_[n.parents[1]].value;
        bump(n.parents[0], a.rows(), a.cols(), [&](Matrix& da) {
          // da += g * b^T
          for (int i = 0; i < a.rows(); ++i)
            for (int k = 0; k < b.cols(); ++k) {
              const double gik = g(i, k);
              if (gik == 0.0) continue;
              for (int j = 0; j < a.cols(); ++j) da(i, j) += gik * b(j, k);
            }
        });
        bump(n.parents[1], b.rows(), b.cols(), [&](Matrix& db) {
          // db += a^T * g
          for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j) {
              const double aij = a(i, j);
              if (aij == 0.0) continue;
              for (int k = 0; k < b.cols(); ++k) db(j, k) += aij * g(i, k);
            }
        });
        break;
      }
      case Op::Add: {
        for (int side = 0; side < 2; ++side)
          bump(n.parents[side], g.rows(), g.cols(), [&](Matrix& d) {
            for (long i = 0; i < g.size(); ++i) d.data()[i] += g.data()[i];
          });
        break;
      }
      case Op::AddRowVec: {
        bump(n.parents[0], g.rows(), g.cols(), [&](Matrix& da) {
          for (long i = 0; i < g.size(); ++i) da.data()[i] += g.data()[i];
        });
        bump(n.parents[1], 1, g.cols(), [&](Matrix& dr) {
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) dr(0, j) += g(i, j);
        });
        break;
      }
      case Op::Hadamard: {
        const Matrix& a = nodes_[n.parents[0]].value;
        const Matrix& b = nodes_[n.parents[1]].value;
        bump(n.parents[0], a.rows(), a.cols(), [&](Matrix& da) {
          for (long i = 0; i < g.size(); ++i) da.data()[i] += g.data()[i] * b.data()[i];
        });
        bump(n.parents[1], b.rows(), b.cols(), [&](Matrix& db) {
          for (long i = 0; i < g.size(); ++i) db.data()[i] += g.data()[i] * a.data()[i];
        });
        break;
      }
      case Op::MulRowVec: {
        const Matrix& a = nodes_[n.parents[0]].value;
        const Matrix& r = nodes_[n.parents[1]].value;
        bump(n.parents[0], a.rows(), a.cols(), [&](Matrix& da) {
          for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j) da(i, j) += g(i, j) * r(0, j);
        });
        bump(n.parents[1], 1, a.cols(), [&](Matrix& dr) {
          for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j) dr(0, j) += g(i, j) * a(i, j);
        });
        break;
      }
      case Op::OneMinus: {
        bump(n.parents[0], g.rows(), g.cols(), [&](Matrix& da) {
          for (long i = 0; i < g.size(); ++i) da.data()[i] -= g.data()[i];
        });
        break;
      }
      case Op::Tanh: {
        const Matrix& y = n.value;
        bump(n.parents[0], y.rows(), y.cols(), [&](Matrix& da) {
          for (long i = 0; i < y.size(); ++i) {
            const double t = y.data()[i];
            da.data()[i] += g.data()[i] * (1.0 - t * t);
          }
        });
        break;
      }
      case Op::Sigmoid: {
        const Matrix& y = n.value;
        bump(n.parents[0], y.rows(), y.cols(), [&](Matrix& da) {
          for (long i = 0; i < y.size(); ++i) {
            const double s = y.data()[i];
            da.data()[i] += g.data()[i] * s * (1.0 - s);
          }
        });
        break;
      }
      case Op::SoftmaxRow: {
        const Matrix& y = n.value;
        bump(n.parents[0], y.rows(), y.cols(), [&](Matrix& da) {
          for (int i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (int j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
            for (int j = 0; j < y.cols(); ++j) da(i, j) += y(i, j) * (g(i, j) - dot);
          }
        });
        break;
      }
      case Op::ConcatCols: {
        int off = 0;
        for (int pid : n.parents) {
          const Matrix& p = nodes_[pid].value;
          const int base = off;
          bump(pid, p.rows(), p.cols(), [&](Matrix& dp) {
            for (int i = 0; i < p.rows(); ++i)
              for (int j = 0; j < p.cols(); ++j) dp(i, j) += g(i, base + j);
          });
          off += p.cols();
        }
        break;
      }
      case Op::VStack: {
        int off = 0;
        for (int pid : n.parents) {
          const Matrix& p = nodes_[pid].value;
          const int base = off;
          bump(pid, p.rows(), p.cols(), [&](Matrix& dp) {
            for (int i = 0; i < p.rows(); ++i)
              for (int j = 0; j < p.cols(); ++j) dp(i, j) += g(base + i, j);
          });
          off += p.rows();
        }
        break;
      }
      case Op::Row: {
        const Matrix& a = nodes_[n.parents[0]].value;
        bump(n.parents[0], a.rows(), a.cols(), [&](Matrix& da) {
          for (int j = 0; j < a.cols(); ++j) da(n.row_index, j) += g(0, j);
        });
        break;
      }
      case Op::Sum: {
        const Matrix& a = nodes_[n.parents[0]].value;
        const double gs = g(0, 0);
        bump(n.parents[0], a.rows(), a.cols(), [&](Matrix& da) {
          for (double& v : da.data()) v += gs;
        });
        break;
      }
      case Op::Scale: {
        const double k = n.factor;
        bump(n.parents[0], g.rows(), g.cols(), [&](Matrix& da) {
          for (long i = 0; i < g.size(); ++i) da.data()[i] += k * g.data()[i];
        });
        break;
      }
      case Op::MaskedNll: {
        const Matrix& p = nodes_[n.parents[0]].value;
        const double gs = g(0, 0);
        bump(n.parents[0], p.rows(), p.cols(), [&](Matrix& dp) {
          for (int t = 0; t < p.rows(); ++t) {
            if (!n.mask[t]) continue;
            const double pv = p(t, n.labels[t]);
            if (pv > kLogProbFloor) dp(t, n.labels[t]) -= gs / pv;
          }
        });
        break;
      }
    }
  }

  GradientStore store;
  for (int id : param_order_) {
    if (live[id])
      store.set(nodes_[id].name, adj[id]);
    else
      store.set(nodes_[id].name, Matrix(nodes_[id].value.rows(), nodes_[id].value.cols()));
  }
  return store;
}

GradientStore finite_diff_grad(std::span<const ParamRef> params, const std::function<double()>& eval,
                               double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("finite_diff_grad: epsilon must be positive");
  GradientStore store;
  for (const ParamRef& ref : params) {
    Matrix grad(ref.value->rows(), ref.value->cols());
    for (long i = 0; i < ref.value->size(); ++i) {
      double& slot = ref.value->data()[i];
      const double saved = slot;
      slot = saved + epsilon;
      const double up = eval();
      slot = saved - epsilon;
      const double down = eval();
      slot = saved;
      grad.data()[i] = (up - down) / (2.0 * epsilon);
    }
    store.set(ref.name, std::move(grad));
  }
  return store;
}

}  // namespace hierfuse
