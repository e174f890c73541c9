#pragma once

// Reverse-mode differentiation over a linear tape of dense tensor ops.
//
// A Tape records every op applied to its Vars in program order, so the node
// list is already topologically sorted and backward() is a single reverse
// sweep. Tapes are rebuilt for every forward unroll and are single-threaded;
// independent tapes may live on different threads.

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "distana/errors.hpp"
#include "distana/tensor.hpp"

namespace distana::ad {

enum class Op {
  kLeaf,
  kLinear,
  kSigmoid,
  kTanh,
  kAdd,
  kSub,
  kHadamard,
  kScale,
  kConcat,
  kColumns,
  kGather,
  kSum,
  kMse,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kLinear: return "linear";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kHadamard: return "hadamard";
    case Op::kScale: return "scale";
    case Op::kConcat: return "concat";
    case Op::kColumns: return "columns";
    case Op::kGather: return "gather";
    case Op::kSum: return "sum";
    case Op::kMse: return "mse";
  }
  return "?";
}

/// Row-gather table: output row i is the concatenation of `slots` source rows
/// index[i*slots + k]; a negative index contributes zeros.
struct GatherTable {
  std::size_t slots = 0;
  std::vector<int> index;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

struct Node {
  Op op = Op::kLeaf;
  int a = -1;
  int b = -1;
  bool requires_grad = false;
  double scalar = 0.0;
  std::size_t offset = 0;
  std::size_t width = 0;
  std::shared_ptr<const GatherTable> table;
  Tensor value;
};

/// Per-node gradients produced by one backward sweep. Leaves that the loss
/// does not reach report an all-zero tensor of their own shape.
class GradientMap {
 public:
  GradientMap() = default;
  GradientMap(const Tape* tape, std::vector<Tensor> grads, std::vector<bool> present)
      : tape_(tape), grads_(std::move(grads)), present_(std::move(present)) {}

  Tensor operator[](const Var& v) const;
  bool reached(const Var& v) const { return present_.at(static_cast<std::size_t>(v.id())); }

 private:
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
  std::vector<bool> present_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records an input tensor. Only leaves created with requires_grad receive
  /// gradients; everything computed from them inherits the flag.
  Var leaf(Tensor value, bool requires_grad = false) {
    check_finite(value, Op::kLeaf);
    Node n;
    n.op = Op::kLeaf;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
  }

  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var variable(Tensor value) { return leaf(std::move(value), true); }

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::size_t size() const { return nodes_.size(); }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size() - 1));
  }

  static void check_finite(const Tensor& t, Op op) {
    if (!t.all_finite())
      throw NumericError(std::string("non-finite value produced by ") + op_name(op));
  }

  GradientMap backward(const Var& loss) const;

 private:
  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->node(id_).value; }

inline Tensor GradientMap::operator[](const Var& v) const {
  const auto i = static_cast<std::size_t>(v.id());
  if (i < present_.size() && present_[i]) return grads_[i];
  return Tensor::zeros(tape_->node(v.id()).value.shape());
}

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape() || a.tape() == nullptr)
    throw ContractError("operands recorded on different tapes");
  return *a.tape();
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

inline Var record(Tape& tape, Node n) {
  Tape::check_finite(n.value, n.op);
  n.requires_grad = (n.a >= 0 && tape.node(n.a).requires_grad) ||
                    (n.b >= 0 && tape.node(n.b).requires_grad);
  return tape.push(std::move(n));
}

inline Var record(Tape& tape, Op op, int a, int b, Tensor value) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.value = std::move(value);
  return record(tape, std::move(n));
}

}  // namespace detail

/// y = W x with no bias. W is [m x n]; x is a vector [n] or a batch of rows
/// [B x n], giving [m] or [B x m].
inline Var linear(const Var& w, const Var& x) {
  Tape& tape = detail::same_tape(w, x);
  const Tensor& W = w.value();
  const Tensor& X = x.value();
  if (W.rank() != 2 || X.rank() < 1 || X.rank() > 2 || X.cols() != W.shape()[1])
    throw DimensionError("linear: cannot apply " + shape_string(W.shape()) + " to " +
                         shape_string(X.shape()));
  const std::size_t m = W.shape()[0], n = W.shape()[1], batch = X.rows();
  std::vector<double> wt(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) wt[j * m + i] = W[i * n + j];
  Tensor Y(X.rank() == 1 ? Shape{m} : Shape{batch, m});
  for (std::size_t r = 0; r < batch; ++r) {
    double* y = &Y[r * m];
    const double* xr = &X[r * n];
    for (std::size_t j = 0; j < n; ++j) {
      const double xj = xr[j];
      const double* col = &wt[j * m];
      for (std::size_t i = 0; i < m; ++i) y[i] += col[i] * xj;
    }
  }
  return detail::record(tape, Op::kLinear, w.id(), x.id(), std::move(Y));
}

inline Var sigmoid(const Var& x) {
  Tensor y = x.value();
  for (double& v : y.values()) v = 1.0 / (1.0 + std::exp(-v));
  return detail::record(*x.tape(), Op::kSigmoid, x.id(), -1, std::move(y));
}

inline Var tanh(const Var& x) {
  Tensor y = x.value();
  for (double& v : y.values()) v = std::tanh(v);
  return detail::record(*x.tape(), Op::kTanh, x.id(), -1, std::move(y));
}

inline Var add(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return detail::record(tape, Op::kAdd, a.id(), b.id(), std::move(y));
}

inline Var sub(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return detail::record(tape, Op::kSub, a.id(), b.id(), std::move(y));
}

inline Var hadamard(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  detail::require_same_shape(a.value(), b.value(), "hadamard");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return detail::record(tape, Op::kHadamard, a.id(), b.id(), std::move(y));
}

inline Var scale(const Var& x, double k) {
  Tensor y = x.value();
  for (double& v : y.values()) v *= k;
  Node n;
  n.op = Op::kScale;
  n.a = x.id();
  n.scalar = k;
  n.value = std::move(y);
  return detail::record(*x.tape(), std::move(n));
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

/// Concatenates along the last axis: vectors end to end, matrices row by row.
inline Var concat(const Var& a, const Var& b) {
  Tape& tape = detail::same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != B.rank() || A.rank() < 1 || A.rank() > 2 || A.rows() != B.rows())
    throw DimensionError("concat: incompatible shapes " + shape_string(A.shape()) + " and " +
                         shape_string(B.shape()));
  const std::size_t rows = A.rows(), ca = A.cols(), cb = B.cols();
  Tensor y(A.rank() == 1 ? Shape{ca + cb} : Shape{rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(&A[r * ca], ca, &y[r * (ca + cb)]);
    std::copy_n(&B[r * cb], cb, &y[r * (ca + cb) + ca]);
  }
  return detail::record(tape, Op::kConcat, a.id(), b.id(), std::move(y));
}

/// Columns [begin, begin+width) of every row.
inline Var columns(const Var& x, std::size_t begin, std::size_t width) {
  const Tensor& X = x.value();
  if (X.rank() < 1 || X.rank() > 2 || begin + width > X.cols())
    throw DimensionError("columns: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + width) + ") outside " + shape_string(X.shape()));
  const std::size_t rows = X.rows(), cols = X.cols();
  Tensor y(X.rank() == 1 ? Shape{width} : Shape{rows, width});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(&X[r * cols + begin], width, &y[r * width]);
  Node n;
  n.op = Op::kColumns;
  n.a = x.id();
  n.offset = begin;
  n.width = width;
  n.value = std::move(y);
  return detail::record(*x.tape(), std::move(n));
}

/// Builds [N x slots*cols] from source rows according to `table`.
inline Var gather_rows(const Var& x, std::shared_ptr<const GatherTable> table) {
  const Tensor& X = x.value();
  if (X.rank() != 2 || table->slots == 0 || table->index.size() % table->slots != 0)
    throw DimensionError("gather_rows: bad source " + shape_string(X.shape()) + " or table");
  const std::size_t cols = X.cols(), slots = table->slots;
  const std::size_t out_rows = table->index.size() / slots;
  Tensor y(Shape{out_rows, slots * cols});
  for (std::size_t r = 0; r < out_rows; ++r)
    for (std::size_t k = 0; k < slots; ++k) {
      const int src = table->index[r * slots + k];
      if (src < 0) continue;
      if (static_cast<std::size_t>(src) >= X.rows())
        throw DimensionError("gather_rows: index out of range");
      std::copy_n(&X[static_cast<std::size_t>(src) * cols], cols, &y[(r * slots + k) * cols]);
    }
  Node n;
  n.op = Op::kGather;
  n.a = x.id();
  n.table = std::move(table);
  n.value = std::move(y);
  return detail::record(*x.tape(), std::move(n));
}

/// Sum of all elements as a scalar.
inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return detail::record(*x.tape(), Op::kSum, x.id(), -1, Tensor::scalar(s));
}

/// Mean squared difference over all elements.
inline Var mse(const Var& pred, const Var& target) {
  Tape& tape = detail::same_tape(pred, target);
  detail::require_same_shape(pred.value(), target.value(), "mse");
  const Tensor& p = pred.value();
  const Tensor& t = target.value();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  return detail::record(tape, Op::kMse, pred.id(), target.id(),
                        Tensor::scalar(s / static_cast<double>(p.size())));
}

inline GradientMap Tape::backward(const Var& loss) const {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) throw ContractError("backward: loss must be a scalar");

  const std::size_t count = nodes_.size();
  std::vector<Tensor> grads(count);
  std::vector<bool> present(count, false);
  auto seed = [&](int id) -> Tensor* {
    const auto i = static_cast<std::size_t>(id);
    if (id < 0 || !nodes_[i].requires_grad) return nullptr;
    if (!present[i]) {
      grads[i] = Tensor::zeros(nodes_[i].value.shape());
      present[i] = true;
    }
    return &grads[i];
  };

  if (!nodes_[static_cast<std::size_t>(loss.id())].requires_grad)
    return GradientMap(this, std::move(grads), std::move(present));
  seed(loss.id())->fill(1.0);

  for (std::size_t k = count; k-- > 0;) {
    if (!present[k]) continue;
    const Node& n = nodes_[k];
    const Tensor& g = grads[k];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kLinear: {
        const Tensor& W = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& X = nodes_[static_cast<std::size_t>(n.b)].value;
        const std::size_t m = W.shape()[0], cols = W.shape()[1], batch = X.rows();
        if (Tensor* gx = seed(n.b)) {
          for (std::size_t r = 0; r < batch; ++r) {
            double* dx = &(*gx)[r * cols];
            for (std::size_t i = 0; i < m; ++i) {
              const double gi = g[r * m + i];
              const double* wrow = &W[i * cols];
              for (std::size_t j = 0; j < cols; ++j) dx[j] += gi * wrow[j];
            }
          }
        }
        if (Tensor* gw = seed(n.a)) {
          for (std::size_t r = 0; r < batch; ++r) {
            const double* xr = &X[r * cols];
            for (std::size_t i = 0; i < m; ++i) {
              const double gi = g[r * m + i];
              double* dw = &(*gw)[i * cols];
              for (std::size_t j = 0; j < cols; ++j) dw[j] += gi * xr[j];
            }
          }
        }
        break;
      }
      case Op::kSigmoid:
        if (Tensor* gx = seed(n.a))
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = n.value[i];
            (*gx)[i] += g[i] * y * (1.0 - y);
          }
        break;
      case Op::kTanh:
        if (Tensor* gx = seed(n.a))
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = n.value[i];
            (*gx)[i] += g[i] * (1.0 - y * y);
          }
        break;
      case Op::kAdd:
        if (Tensor* ga = seed(n.a))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (Tensor* gb = seed(n.b))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
        break;
      case Op::kSub:
        if (Tensor* ga = seed(n.a))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        if (Tensor* gb = seed(n.b))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
        break;
      case Op::kHadamard: {
        const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
        if (Tensor* ga = seed(n.a))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * B[i];
        if (Tensor* gb = seed(n.b))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * A[i];
        break;
      }
      case Op::kScale:
        if (Tensor* gx = seed(n.a))
          for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * n.scalar;
        break;
      case Op::kConcat: {
        const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
        const std::size_t rows = A.rows(), ca = A.cols(), cb = B.cols();
        if (Tensor* ga = seed(n.a))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < ca; ++j) (*ga)[r * ca + j] += g[r * (ca + cb) + j];
        if (Tensor* gb = seed(n.b))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cb; ++j) (*gb)[r * cb + j] += g[r * (ca + cb) + ca + j];
        break;
      }
      case Op::kColumns:
        if (Tensor* gx = seed(n.a)) {
          const std::size_t cols = gx->cols(), rows = gx->rows();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n.width; ++j)
              (*gx)[r * cols + n.offset + j] += g[r * n.width + j];
        }
        break;
      case Op::kGather:
        if (Tensor* gx = seed(n.a)) {
          const std::size_t cols = gx->cols(), slots = n.table->slots;
          const std::size_t out_rows = n.table->index.size() / slots;
          for (std::size_t r = 0; r < out_rows; ++r)
            for (std::size_t s = 0; s < slots; ++s) {
              const int src = n.table->index[r * slots + s];
              if (src < 0) continue;
              double* dst = &(*gx)[static_cast<std::size_t>(src) * cols];
              const double* gr = &g[(r * slots + s) * cols];
              for (std::size_t j = 0; j < cols; ++j) dst[j] += gr[j];
            }
        }
        break;
      case Op::kSum:
        if (Tensor* gx = seed(n.a))
          for (double& v : gx->values()) v += g[0];
        break;
      case Op::kMse: {
        const Tensor& P = nodes_[static_cast<std::size_t>(n.a)].value;
        const Tensor& T = nodes_[static_cast<std::size_t>(n.b)].value;
        const double k = 2.0 * g[0] / static_cast<double>(P.size());
        if (Tensor* gp = seed(n.a))
          for (std::size_t i = 0; i < P.size(); ++i) (*gp)[i] += k * (P[i] - T[i]);
        if (Tensor* gt = seed(n.b))
          for (std::size_t i = 0; i < P.size(); ++i) (*gt)[i] -= k * (P[i] - T[i]);
        break;
      }
    }
  }
  return GradientMap(this, std::move(grads), std::move(present));
}

inline GradientMap backward(const Var& loss) {
  if (!loss.valid()) throw ContractError("backward: loss is not recorded on a tape");
  return loss.tape()->backward(loss);
}

/// Central-difference check of backward() for a scalar function of `params`.
///
/// `f(tape, vars)` must record a deterministic scalar on `tape` from the given
/// leaf vars. Returns the largest |analytic - numeric| / max(|analytic|,
/// |numeric|, floor) over every coordinate of every parameter; `floor` keeps
/// near-zero gradients from turning round-off into a huge ratio. `order` 2
/// uses (f(x+e) - f(x-e)) / 2e; order 4 the five-point central stencil,
/// which tolerates a larger e and so less cancellation.
template <class F>
double grad_check(F&& f, const std::vector<Tensor>& params, double eps, double floor = 1e-8, int order = 2) {
  if (!(eps > 0.0)) throw ContractError("grad_check: eps must be positive");
  if (order != 2 && order != 4) throw ContractError("grad_check: order must be 2 or 4");
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : params) vars.push_back(tape.variable(p));
    Var loss = f(tape, std::span<const Var>(vars));
    GradientMap g = backward(loss);
    for (const Var& v : vars) analytic.push_back(g[v]);
  }
  auto evaluate = [&](const std::vector<Tensor>& ps) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& p : ps) vars.push_back(tape.constant(p));
    return f(tape, std::span<const Var>(vars)).value().item();
  };

  double worst = 0.0;
  std::vector<Tensor> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double x0 = params[p][i];
      auto at = [&](double offset) {
        probe[p][i] = x0 + offset;
        const double v = evaluate(probe);
        probe[p][i] = x0;
        return v;
      };
      const double numeric = order == 2 ? (at(eps) - at(-eps)) / (2.0 * eps)
                                        : (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace distana::ad
