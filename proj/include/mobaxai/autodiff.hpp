// Copyright 2026 The mobaxai Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// A Tape records every primitive in creation order; backward() walks the
// record in reverse, so each node is visited exactly once. Rank-2 tensors are
// matrices [rows, cols]; rank-1 tensors are vectors (biases, layer-norm
// gains); a scalar is shape [1].

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mobaxai::ad {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != data_.size())
      throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                       std::to_string(data_.size()) + " values");
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return shape_.empty(); }
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool operator==(const Tensor&) const = default;

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  static std::size_t count(const Shape& s) {
    if (s.empty()) return 0;
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}
inline MatMap as_matrix(Tensor& t) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Accumulates into parent gradients. `grads[id]` is allocated lazily by
/// Tape::grad_slot, so only paths that reach a grad-requiring leaf pay for it.
using BackwardFn = std::function<void(Tape&, std::size_t self, const Tensor& grad_out)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Parameters and model inputs. Only leaves can be backward() targets.
  Var leaf(Tensor value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, true, requires_grad});
    return Var{this, nodes_.size() - 1};
  }
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
    if (!value.all_finite()) throw std::domain_error("non-finite value produced on tape");
    bool needs = false;
    for (std::size_t p : parents) needs = needs || nodes_[p].requires_grad;
    nodes_.push_back(Node{std::move(value), std::move(parents),
                          needs ? std::move(fn) : BackwardFn{}, false, needs});
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool is_leaf(std::size_t id) const { return nodes_.at(id).is_leaf; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer for a node, zero-initialised on first touch; nullptr if the
  /// node does not lead to any grad-requiring leaf.
  Tensor* grad_slot(std::size_t id) {
    if (!nodes_[id].requires_grad) return nullptr;
    Tensor& g = grads_[id];
    if (g.empty()) g = Tensor(nodes_[id].value.shape(), 0.0);
    return &g;
  }

  std::map<std::size_t, Tensor> backward(Var output, const std::vector<Var>& targets) {
    if (output.tape != this) throw std::invalid_argument("backward: output is not on this tape");
    if (output.shape() != Shape{1})
      throw ShapeError("backward: output must have shape [1], got " + shape_str(output.shape()));
    for (const Var& t : targets) {
      if (t.tape != this || !is_leaf(t.id))
        throw std::invalid_argument("backward: target " + std::to_string(t.id) + " is not a leaf");
    }
    grads_.assign(nodes_.size(), Tensor{});
    if (nodes_[output.id].requires_grad) grads_[output.id] = Tensor({1}, 1.0);
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.is_leaf || !n.backward || grads_[i].empty()) continue;
      n.backward(*this, i, grads_[i]);
    }
    std::map<std::size_t, Tensor> out;
    for (const Var& t : targets) {
      Tensor g = grads_[t.id].empty() ? Tensor(nodes_[t.id].value.shape(), 0.0) : grads_[t.id];
      out.emplace(t.id, std::move(g));
    }
    grads_.clear();
    return out;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool is_leaf = false;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

inline Tape& same_tape(std::initializer_list<Var> vs) {
  Tape* t = vs.begin()->tape;
  for (const Var& v : vs)
    if (v.tape != t || t == nullptr) throw std::invalid_argument("operands live on different tapes");
  return *t;
}

inline void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

template <class F>
Var unary(Var a, F&& f, std::function<double(double x, double y)> dfdx) {
  Tape& tape = *a.tape;
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return tape.record(std::move(y), {a.id}, [dfdx = std::move(dfdx)](Tape& tp, std::size_t self, const Tensor& g) {
    std::size_t p = tp.parents(self)[0];
    Tensor* gp = tp.grad_slot(p);
    if (!gp) return;
    const Tensor& x = tp.value(p);
    const Tensor& y = tp.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*gp)[i] += g[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  Tape& tape = detail::same_tape({a, b});
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  detail::require_rank2("matmul", A);
  detail::require_rank2("matmul", B);
  if (A.cols() != B.rows())
    throw ShapeError("matmul: inner extents differ, " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  Tensor C({A.rows(), B.cols()});
  as_matrix(C).noalias() = as_matrix(A) * as_matrix(B);
  return tape.record(std::move(C), {a.id, b.id}, [](Tape& tp, std::size_t self, const Tensor& g) {
    auto ps = tp.parents(self);
    const Tensor& A = tp.value(ps[0]);
    const Tensor& B = tp.value(ps[1]);
    if (Tensor* ga = tp.grad_slot(ps[0])) as_matrix(*ga).noalias() += as_matrix(g) * as_matrix(B).transpose();
    if (Tensor* gb = tp.grad_slot(ps[1])) as_matrix(*gb).noalias() += as_matrix(A).transpose() * as_matrix(g);
  });
}

inline Var transpose(Var a) {
  Tape& tape = *a.tape;
  const Tensor& A = a.value();
  detail::require_rank2("transpose", A);
  Tensor T({A.cols(), A.rows()});
  as_matrix(T) = as_matrix(A).transpose();
  return tape.record(std::move(T), {a.id}, [](Tape& tp, std::size_t self, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(tp.parents(self)[0])) as_matrix(*ga) += as_matrix(g).transpose();
  });
}

/// Same-shape sum, or a rank-1 bias of width cols broadcast over the rows of a.
inline Var add(Var a, Var b) {
  Tape& tape = detail::same_tape({a, b});
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool bias = A.rank() == 2 && B.rank() == 1 && B.size() == A.cols();
  if (A.shape() != B.shape() && !bias)
    throw ShapeError("add: shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()) + " do not conform");
  Tensor C = A;
  if (bias) {
    as_matrix(C).rowwise() += Eigen::Map<const Eigen::RowVectorXd>(B.data().data(), static_cast<Eigen::Index>(B.size()));
  } else {
    for (std::size_t i = 0; i < C.size(); ++i) C[i] += B[i];
  }
  return tape.record(std::move(C), {a.id, b.id}, [bias](Tape& tp, std::size_t self, const Tensor& g) {
    auto ps = tp.parents(self);
    if (Tensor* ga = tp.grad_slot(ps[0]))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = tp.grad_slot(ps[1])) {
      if (bias) {
        Eigen::Map<Eigen::RowVectorXd>(gb->data().data(), static_cast<Eigen::Index>(gb->size())) +=
            as_matrix(g).colwise().sum();
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
      }
    }
  });
}

inline Var mul(Var a, Var b) {
  Tape& tape = detail::same_tape({a, b});
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape())
    throw ShapeError("mul: shapes " + shape_str(A.shape()) + " and " + shape_str(B.shape()) + " differ");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  return tape.record(std::move(C), {a.id, b.id}, [](Tape& tp, std::size_t self, const Tensor& g) {
    auto ps = tp.parents(self);
    const Tensor& A = tp.value(ps[0]);
    const Tensor& B = tp.value(ps[1]);
    if (Tensor* ga = tp.grad_slot(ps[0]))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * B[i];
    if (Tensor* gb = tp.grad_slot(ps[1]))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * A[i];
  });
}

inline Var scale(Var a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

// ---------------------------------------------------------------------------
// Structural

/// axis 0 stacks rows, axis 1 stacks columns.
inline Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Tape& tape = *parts.front().tape;
  std::vector<std::size_t> ids;
  std::size_t rows = 0, cols = 0;
  for (const Var& v : parts) {
    if (v.tape != &tape) throw std::invalid_argument("operands live on different tapes");
    const Tensor& t = v.value();
    detail::require_rank2("concat", t);
    ids.push_back(v.id);
    if (axis == 0) {
      if (cols && t.cols() != cols)
        throw ShapeError("concat(axis 0): column extents differ at " + shape_str(t.shape()));
      cols = t.cols();
      rows += t.rows();
    } else {
      if (rows && t.rows() != rows)
        throw ShapeError("concat(axis 1): row extents differ at " + shape_str(t.shape()));
      rows = t.rows();
      cols += t.cols();
    }
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (const Var& v : parts) {
    const Tensor& t = v.value();
    if (axis == 0) {
      as_matrix(out).middleRows(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(t.rows())) = as_matrix(t);
      off += t.rows();
    } else {
      as_matrix(out).middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(t.cols())) = as_matrix(t);
      off += t.cols();
    }
  }
  return tape.record(std::move(out), std::move(ids), [axis](Tape& tp, std::size_t self, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t p : tp.parents(self)) {
      const Tensor& t = tp.value(p);
      const auto n = static_cast<Eigen::Index>(axis == 0 ? t.rows() : t.cols());
      if (Tensor* gp = tp.grad_slot(p)) {
        if (axis == 0) as_matrix(*gp) += as_matrix(g).middleRows(static_cast<Eigen::Index>(off), n);
        else as_matrix(*gp) += as_matrix(g).middleCols(static_cast<Eigen::Index>(off), n);
      }
      off += static_cast<std::size_t>(n);
    }
  });
}

/// Half-open range [begin, end) along axis 0 (rows) or 1 (columns).
inline Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  Tape& tape = *a.tape;
  const Tensor& A = a.value();
  detail::require_rank2("slice", A);
  const std::size_t extent = axis == 0 ? A.rows() : A.cols();
  if (begin >= end || end > extent)
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") outside axis " +
                     std::to_string(axis) + " of " + shape_str(A.shape()));
  const auto b = static_cast<Eigen::Index>(begin);
  const auto n = static_cast<Eigen::Index>(end - begin);
  Tensor out(axis == 0 ? Shape{end - begin, A.cols()} : Shape{A.rows(), end - begin});
  if (axis == 0) as_matrix(out) = as_matrix(A).middleRows(b, n);
  else as_matrix(out) = as_matrix(A).middleCols(b, n);
  return tape.record(std::move(out), {a.id}, [axis, b, n](Tape& tp, std::size_t self, const Tensor& g) {
    Tensor* ga = tp.grad_slot(tp.parents(self)[0]);
    if (!ga) return;
    if (axis == 0) as_matrix(*ga).middleRows(b, n) += as_matrix(g);
    else as_matrix(*ga).middleCols(b, n) += as_matrix(g);
  });
}

/// Row gather: out[r] = a[indices[r]]. Repeated indices accumulate in backward.
inline Var gather_rows(Var a, std::vector<std::size_t> indices) {
  Tape& tape = *a.tape;
  const Tensor& A = a.value();
  detail::require_rank2("gather_rows", A);
  Tensor out({indices.size(), A.cols()});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= A.rows())
      throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " outside " + shape_str(A.shape()));
    std::copy_n(A.data().begin() + static_cast<std::ptrdiff_t>(indices[r] * A.cols()), A.cols(),
                out.data().begin() + static_cast<std::ptrdiff_t>(r * A.cols()));
  }
  return tape.record(std::move(out), {a.id}, [idx = std::move(indices)](Tape& tp, std::size_t self, const Tensor& g) {
    Tensor* ga = tp.grad_slot(tp.parents(self)[0]);
    if (!ga) return;
    const std::size_t c = g.cols();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < c; ++j) (*ga)[idx[r] * c + j] += g[r * c + j];
  });
}

/// Element gather: out[r] = a[r, columns[r]], shape [rows, 1].
inline Var gather_columns(Var a, std::vector<std::size_t> columns) {
  Tape& tape = *a.tape;
  const Tensor& A = a.value();
  detail::require_rank2("gather_columns", A);
  if (columns.size() != A.rows())
    throw ShapeError("gather_columns: " + std::to_string(columns.size()) + " indices for " + shape_str(A.shape()));
  Tensor out({A.rows(), 1});
  for (std::size_t r = 0; r < A.rows(); ++r) {
    if (columns[r] >= A.cols())
      throw ShapeError("gather_columns: column " + std::to_string(columns[r]) + " outside " + shape_str(A.shape()));
    out[r] = A.at(r, columns[r]);
  }
  return tape.record(std::move(out), {a.id}, [cols = std::move(columns)](Tape& tp, std::size_t self, const Tensor& g) {
    Tensor* ga = tp.grad_slot(tp.parents(self)[0]);
    if (!ga) return;
    for (std::size_t r = 0; r < cols.size(); ++r) ga->at(r, cols[r]) += g[r];
  });
}

inline Var reshape(Var a, Shape shape) {
  Tape& tape = *a.tape;
  Tensor out(std::move(shape), a.value().values());
  return tape.record(std::move(out), {a.id}, [](Tape& tp, std::size_t self, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(tp.parents(self)[0]))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

inline Var sigmoid(Var a) {
  return detail::unary(
      a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(Var a) {
  return detail::unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var log(Var a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------------------
// Row-wise normalisations. A rank-1 input is treated as a single row.

inline Var softmax(Var a) {
  Tape& tape = *a.tape;
  const Tensor& A = a.value();
  Tensor out = A;
  const std::size_t c = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double* row = out.data().data() + r * c;
    const double m = *std::max_element(row, row + c);
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += (row[j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < c; ++j) row[j] /= z;
  }
  return tape.record(std::move(out), {a.id}, [](Tape& tp, std::size_t self, const Tensor& g) {
    Tensor* ga = tp.grad_slot(tp.parents(self)[0]);
    if (!ga) return;
    const Tensor& y = tp.value(self);
    const std::size_t c = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += g[r * c + j] * y[r * c + j];
      for (std::size_t j = 0; j < c; ++j) (*ga)[r * c + j] += y[r * c + j] * (g[r * c + j] - dot);
    }
  });
}

inline Var log_softmax(Var a) {
  Tape& tape = *a.tape;
  const Tensor& A = a.value();
  Tensor out = A;
  const std::size_t c = A.cols();
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double* row = out.data().data() + r * c;
    const double m = *std::max_element(row, row + c);
    double z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) row[j] -= lse;
  }
  return tape.record(std::move(out), {a.id}, [](Tape& tp, std::size_t self, const Tensor& g) {
    Tensor* ga = tp.grad_slot(tp.parents(self)[0]);
    if (!ga) return;
    const Tensor& y = tp.value(self);
    const std::size_t c = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double gs = 0;
      for (std::size_t j = 0; j < c; ++j) gs += g[r * c + j];
      for (std::size_t j = 0; j < c; ++j) (*ga)[r * c + j] += g[r * c + j] - std::exp(y[r * c + j]) * gs;
    }
  });
}

/// y = (x - mean) / sqrt(var + eps) * gain + bias, per row.
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  Tape& tape = detail::same_tape({x, gain, bias});
  const Tensor& X = x.value();
  detail::require_rank2("layer_norm", X);
  const std::size_t n = X.cols();
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n})
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                     " do not match width of " + shape_str(X.shape()));
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  Tensor out(X.shape());
  std::vector<double> xhat(X.size()), inv_std(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < n; ++j) mean += X[r * n + j];
    mean /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) var += (X[r * n + j] - mean) * (X[r * n + j] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (X[r * n + j] - mean) * inv_std[r];
      out[r * n + j] = xhat[r * n + j] * G[j] + B[j];
    }
  }
  return tape.record(std::move(out), {x.id, gain.id, bias.id},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), n](Tape& tp, std::size_t self, const Tensor& g) {
    auto ps = tp.parents(self);
    const Tensor& G = tp.value(ps[1]);
    const std::size_t rows = g.size() / n;
    if (Tensor* gg = tp.grad_slot(ps[1]))
      for (std::size_t i = 0; i < g.size(); ++i) (*gg)[i % n] += g[i] * xhat[i];
    if (Tensor* gb = tp.grad_slot(ps[2]))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % n] += g[i];
    if (Tensor* gx = tp.grad_slot(ps[0])) {
      for (std::size_t r = 0; r < rows; ++r) {
        double s1 = 0, s2 = 0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = g[r * n + j] * G[j];
          s1 += d;
          s2 += d * xhat[r * n + j];
        }
        const double nn = static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double d = g[r * n + j] * G[j];
          (*gx)[r * n + j] += inv_std[r] * (d - s1 / nn - xhat[r * n + j] * s2 / nn);
        }
      }
    }
  });
}

/// Elementwise product with a pre-sampled mask (entries 0 or 1/(1-p)).
inline Var dropout_with_mask(Var x, const Tensor& mask) {
  if (mask.shape() != x.shape())
    throw ShapeError("dropout_with_mask: mask " + shape_str(mask.shape()) + " vs input " + shape_str(x.shape()));
  Tape& tape = *x.tape;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return tape.record(std::move(out), {x.id}, [mask](Tape& tp, std::size_t self, const Tensor& g) {
    if (Tensor* gx = tp.grad_slot(tp.parents(self)[0]))
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(Var a) {
  Tape& tape = *a.tape;
  const Tensor& A = a.value();
  double s = 0;
  for (double v : A.data()) s += v;
  return tape.record(Tensor::scalar(s), {a.id}, [](Tape& tp, std::size_t self, const Tensor& g) {
    if (Tensor* ga = tp.grad_slot(tp.parents(self)[0]))
      for (double& v : ga->data()) v += g[0];
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Averages consecutive groups of `segment` rows: [n*segment, c] -> [n, c].
inline Var segment_mean(Var a, std::size_t segment) {
  Tape& tape = *a.tape;
  const Tensor& A = a.value();
  detail::require_rank2("segment_mean", A);
  if (segment == 0 || A.rows() % segment != 0)
    throw ShapeError("segment_mean: " + std::to_string(segment) + " does not divide rows of " + shape_str(A.shape()));
  const std::size_t n = A.rows() / segment, c = A.cols();
  Tensor out({n, c});
  const double w = 1.0 / static_cast<double>(segment);
  for (std::size_t r = 0; r < A.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) out[(r / segment) * c + j] += w * A[r * c + j];
  return tape.record(std::move(out), {a.id}, [segment, w](Tape& tp, std::size_t self, const Tensor& g) {
    Tensor* ga = tp.grad_slot(tp.parents(self)[0]);
    if (!ga) return;
    const std::size_t c = g.cols();
    for (std::size_t r = 0; r < ga->rows(); ++r)
      for (std::size_t j = 0; j < c; ++j) (*ga)[r * c + j] += w * g[(r / segment) * c + j];
  });
}

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product attention

/// Softmax(q k^T / sqrt(d)) for one (sequence, head) block; q and k are
/// [seq, d] row-major spans with row stride `stride`.
inline void attention_block_weights(const double* q, const double* k, std::size_t seq, std::size_t d,
                                    std::size_t stride, double* weights) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < seq; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < seq; ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i * stride + c] * k[j * stride + c];
      weights[i * seq + j] = dot * s;
      m = std::max(m, weights[i * seq + j]);
    }
    double z = 0;
    for (std::size_t j = 0; j < seq; ++j) z += (weights[i * seq + j] = std::exp(weights[i * seq + j] - m));
    for (std::size_t j = 0; j < seq; ++j) weights[i * seq + j] /= z;
  }
}

/// q, k, v: [n*seq, width] with rows grouped by sequence; width split into
/// `heads` contiguous column blocks. Returns the concatenated head outputs.
/// When `probe` is non-null it receives the attention weights laid out as
/// [n*heads*seq, seq].
inline Var attention(Var q, Var k, Var v, std::size_t seq, std::size_t heads, Tensor* probe = nullptr) {
  Tape& tape = detail::same_tape({q, k, v});
  const Tensor& Q = q.value();
  const Tensor& K = k.value();
  const Tensor& V = v.value();
  detail::require_rank2("attention", Q);
  if (K.shape() != Q.shape() || V.shape() != Q.shape())
    throw ShapeError("attention: q/k/v shapes " + shape_str(Q.shape()) + "/" + shape_str(K.shape()) + "/" +
                     shape_str(V.shape()) + " differ");
  if (seq == 0 || Q.rows() % seq != 0 || heads == 0 || Q.cols() % heads != 0)
    throw ShapeError("attention: seq " + std::to_string(seq) + " / heads " + std::to_string(heads) +
                     " do not tile " + shape_str(Q.shape()));
  const std::size_t width = Q.cols(), d = width / heads, n = Q.rows() / seq;
  std::vector<double> weights(n * heads * seq * seq);
  Tensor out(Q.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t base = b * seq * width + h * d;
      double* w = weights.data() + (b * heads + h) * seq * seq;
      attention_block_weights(Q.data().data() + base, K.data().data() + base, seq, d, width, w);
      for (std::size_t i = 0; i < seq; ++i)
        for (std::size_t j = 0; j < seq; ++j)
          for (std::size_t c = 0; c < d; ++c) out[base + i * width + c] += w[i * seq + j] * V[base + j * width + c];
    }
  }
  if (probe) *probe = Tensor({n * heads * seq, seq}, weights);
  return tape.record(std::move(out), {q.id, k.id, v.id},
                     [weights = std::move(weights), seq, heads, d, n, width](Tape& tp, std::size_t self, const Tensor& g) {
    auto ps = tp.parents(self);
    const Tensor& Q = tp.value(ps[0]);
    const Tensor& K = tp.value(ps[1]);
    const Tensor& V = tp.value(ps[2]);
    Tensor* gq = tp.grad_slot(ps[0]);
    Tensor* gk = tp.grad_slot(ps[1]);
    Tensor* gv = tp.grad_slot(ps[2]);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> dw(seq * seq), ds(seq * seq);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t base = b * seq * width + h * d;
        const double* w = weights.data() + (b * heads + h) * seq * seq;
        for (std::size_t i = 0; i < seq; ++i)
          for (std::size_t j = 0; j < seq; ++j) {
            double acc = 0;
            for (std::size_t c = 0; c < d; ++c) acc += g[base + i * width + c] * V[base + j * width + c];
            dw[i * seq + j] = acc;
          }
        if (gv)
          for (std::size_t i = 0; i < seq; ++i)
            for (std::size_t j = 0; j < seq; ++j)
              for (std::size_t c = 0; c < d; ++c) (*gv)[base + j * width + c] += w[i * seq + j] * g[base + i * width + c];
        for (std::size_t i = 0; i < seq; ++i) {
          double dot = 0;
          for (std::size_t j = 0; j < seq; ++j) dot += dw[i * seq + j] * w[i * seq + j];
          for (std::size_t j = 0; j < seq; ++j) ds[i * seq + j] = w[i * seq + j] * (dw[i * seq + j] - dot) * s;
        }
        for (std::size_t i = 0; i < seq; ++i)
          for (std::size_t j = 0; j < seq; ++j)
            for (std::size_t c = 0; c < d; ++c) {
              if (gq) (*gq)[base + i * width + c] += ds[i * seq + j] * K[base + j * width + c];
              if (gk) (*gk)[base + j * width + c] += ds[i * seq + j] * Q[base + i * width + c];
            }
      }
    }
  });
}

}  // namespace mobaxai::ad
