#include "flowtrpo/diffcore/tape.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <Eigen/Core>
#include <cmath>
#include <string>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo {

namespace {

std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

void require_finite(const Tensor& t, Op op) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op_name(op));
}

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

enum class Broadcast { Same, RowLhs, RowRhs, ScalarLhs, ScalarRhs };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, Op op) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (b.is_scalar()) return Broadcast::ScalarRhs;
  if (a.is_scalar()) return Broadcast::ScalarLhs;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::RowRhs;
  if (a.rows() == 1 && a.cols() == b.cols()) return Broadcast::RowLhs;
  throw ConfigError(std::string(op_name(op)) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Index into the (possibly broadcast) operand for flat output position i.
inline std::size_t bidx(Broadcast kind, bool lhs, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::Same:
      return i;
    case Broadcast::RowLhs:
      return lhs ? i % cols : i;
    case Broadcast::RowRhs:
      return lhs ? i : i % cols;
    case Broadcast::ScalarLhs:
      return lhs ? 0 : i;
    case Broadcast::ScalarRhs:
      return lhs ? i : 0;
  }
  return i;
}

void accumulate(Tensor& into, const Tensor& delta) {
  if (into.size() == 0) {
    into = delta;
    return;
  }
  auto dst = into.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor& adjoint_slot(std::vector<Tensor>& adj, std::size_t id, const Tensor& like) {
  Tensor& slot = adj[id];
  if (slot.size() == 0) slot = Tensor(like.rows(), like.cols(), 0.0);
  return slot;
}

// C = A B, row-major, i-k-j ordering.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void gemm(const Tensor& a, const Tensor& b, Tensor& c) { as_matrix(c).noalias() += as_matrix(a) * as_matrix(b); }

}  // namespace

struct TapeRecorder {
  using Node = Tape::Node;
  static Var push(Tape& tape, Tape::Node node) { return tape.push(std::move(node)); }
  static const Tape::Node& node(const Tape& tape, std::size_t id) { return tape.nodes_[id]; }
  static bool needs_grad(Var v) { return v.tape().nodes_[v.id()].needs_grad; }
};

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Softplus: return "softplus";
    case Op::LogGamma: return "lgamma";
    case Op::Digamma: return "digamma";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SliceCols: return "slice";
    case Op::ConcatCols: return "concat";
    case Op::Scale: return "scale";
    case Op::View: return "view";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->value(*this);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  require_finite(value, Op::Leaf);
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  require_finite(value, Op::Constant);
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

namespace {

Var record_binary(Op op, Var a, Var b, Tensor out) {
  require_finite(out, op);
  TapeRecorder::Node n;
  n.op = op;
  n.value = std::move(out);
  n.lhs = a.id();
  n.rhs = b.id();
  n.needs_grad = TapeRecorder::needs_grad(a) || TapeRecorder::needs_grad(b);
  return TapeRecorder::push(a.tape(), std::move(n));
}

Var record_unary(Op op, Var x, Tensor out) {
  require_finite(out, op);
  TapeRecorder::Node n;
  n.op = op;
  n.value = std::move(out);
  n.lhs = x.id();
  n.needs_grad = TapeRecorder::needs_grad(x);
  return TapeRecorder::push(x.tape(), std::move(n));
}

Var elementwise(Op op, Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(av, bv, op);
  const bool lhs_big = kind == Broadcast::Same || kind == Broadcast::RowRhs || kind == Broadcast::ScalarRhs;
  const Tensor& big = lhs_big ? av : bv;
  Tensor out(big.rows(), big.cols());
  auto o = out.data();
  auto A = av.data();
  auto B = bv.data();
  const std::size_t cols = big.cols();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x = A[bidx(kind, true, i, cols)];
    const double y = B[bidx(kind, false, i, cols)];
    switch (op) {
      case Op::Add: o[i] = x + y; break;
      case Op::Sub: o[i] = x - y; break;
      default: o[i] = x * y; break;
    }
  }
  return record_binary(op, a, b, std::move(out));
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.rows(), x.cols());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_positive(const Tensor& x, Op op) {
  for (double v : x.data()) {
    if (!(v > 0.0)) {
      throw DomainError(std::string(op_name(op)) + " of non-positive value " + std::to_string(v));
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ConfigError("matmul: shape mismatch " + shape_str(av) + " x " + shape_str(bv));
  }
  Tensor out(av.rows(), bv.cols(), 0.0);
  gemm(av, bv, out);
  return record_binary(Op::MatMul, a, b, std::move(out));
}

Var operator+(Var a, Var b) { return elementwise(Op::Add, a, b); }
Var operator-(Var a, Var b) { return elementwise(Op::Sub, a, b); }
Var operator*(Var a, Var b) { return elementwise(Op::Mul, a, b); }

Var exp(Var x) { return record_unary(Op::Exp, x, map(x.value(), [](double v) { return std::exp(v); })); }

Var log(Var x) {
  require_positive(x.value(), Op::Log);
  return record_unary(Op::Log, x, map(x.value(), [](double v) { return std::log(v); }));
}

Var tanh(Var x) { return record_unary(Op::Tanh, x, map(x.value(), [](double v) { return std::tanh(v); })); }

Var softplus(Var x) { return record_unary(Op::Softplus, x, map(x.value(), stable_softplus)); }

Var lgamma(Var x) {
  require_positive(x.value(), Op::LogGamma);
  return record_unary(Op::LogGamma, x, map(x.value(), [](double v) { return boost::math::lgamma(v); }));
}

Var digamma(Var x) {
  require_positive(x.value(), Op::Digamma);
  return record_unary(Op::Digamma, x, map(x.value(), [](double v) { return boost::math::digamma(v); }));
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return record_unary(Op::Sum, x, Tensor::scalar(s));
}

Var mean(Var x) {
  const Tensor& xv = x.value();
  if (xv.size() == 0) throw ConfigError("mean of an empty tensor");
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return record_unary(Op::Mean, x, Tensor::scalar(s / static_cast<double>(xv.size())));
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (begin >= end || end > xv.cols()) {
    throw ConfigError("slice: columns [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                      shape_str(xv));
  }
  const std::size_t w = end - begin;
  Tensor out(xv.rows(), w);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < w; ++c) out(r, c) = xv(r, begin + c);
  }
  TapeRecorder::Node n;
  n.op = Op::SliceCols;
  n.value = std::move(out);
  n.lhs = x.id();
  n.begin = begin;
  n.needs_grad = TapeRecorder::needs_grad(x);
  return TapeRecorder::push(x.tape(), std::move(n));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat of zero tensors");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.rows() != rows) throw ConfigError("concat: row mismatch " + shape_str(p.value()));
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  TapeRecorder::Node n;
  n.op = Op::ConcatCols;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    }
    offset += pv.cols();
    n.operands.push_back(p.id());
    n.needs_grad = n.needs_grad || TapeRecorder::needs_grad(p);
  }
  n.value = std::move(out);
  return TapeRecorder::push(parts.front().tape(), std::move(n));
}

Var scale(Var x, double factor) {
  TapeRecorder::Node n;
  n.op = Op::Scale;
  n.value = map(x.value(), [factor](double v) { return v * factor; });
  require_finite(n.value, Op::Scale);
  n.lhs = x.id();
  n.scalar = factor;
  n.needs_grad = TapeRecorder::needs_grad(x);
  return TapeRecorder::push(x.tape(), std::move(n));
}

Var view(Var flat, std::size_t offset, std::size_t rows, std::size_t cols) {
  const Tensor& fv = flat.value();
  if (offset + rows * cols > fv.size()) {
    throw ConfigError("view: window exceeds " + std::to_string(fv.size()) + " values");
  }
  std::vector<double> data(fv.data().begin() + static_cast<std::ptrdiff_t>(offset),
                           fv.data().begin() + static_cast<std::ptrdiff_t>(offset + rows * cols));
  TapeRecorder::Node n;
  n.op = Op::View;
  n.value = Tensor(rows, cols, std::move(data));
  n.lhs = flat.id();
  n.begin = offset;
  n.needs_grad = TapeRecorder::needs_grad(flat);
  return TapeRecorder::push(flat.tape(), std::move(n));
}

Var row_sum(Var x) { return matmul(x, x.tape().constant(Tensor(x.cols(), 1, 1.0))); }

Var repeat_rows(Var row, std::size_t rows) {
  if (row.rows() != 1) throw ConfigError("repeat_rows expects a single row");
  return matmul(row.tape().constant(Tensor(rows, 1, 1.0)), row);
}

std::vector<double> Tape::gradient(Var output, Var wrt) const {
  if (&output.tape() != this || &wrt.tape() != this) throw ContractError("gradient: Var from another tape");
  if (!value(output).is_scalar()) {
    throw ContractError("gradient of non-scalar output " + shape_str(value(output)));
  }
  if (nodes_[wrt.id()].op != Op::Leaf) throw ContractError("gradient: wrt must be a leaf");
  if (wrt.id() > output.id()) return std::vector<double>(nodes_[wrt.id()].value.size(), 0.0);

  std::vector<Tensor> adj(output.id() + 1);
  adj[output.id()] = Tensor::scalar(1.0);
  last_visits_ = 0;

  for (std::size_t idx = output.id() + 1; idx-- > 0;) {
    const Node& n = nodes_[idx];
    if (!n.needs_grad || adj[idx].size() == 0) continue;
    ++last_visits_;
    const Tensor& g = adj[idx];
    switch (n.op) {
      case Op::Leaf:
      case Op::Constant:
        break;
      case Op::MatMul: {
        const Tensor& a = nodes_[n.lhs].value;
        const Tensor& b = nodes_[n.rhs].value;
        if (nodes_[n.lhs].needs_grad) {
          as_matrix(adjoint_slot(adj, n.lhs, a)).noalias() += as_matrix(g) * as_matrix(b).transpose();
        }
        if (nodes_[n.rhs].needs_grad) {
          as_matrix(adjoint_slot(adj, n.rhs, b)).noalias() += as_matrix(a).transpose() * as_matrix(g);
        }
        break;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul: {
        const Tensor& a = nodes_[n.lhs].value;
        const Tensor& b = nodes_[n.rhs].value;
        const Broadcast kind = broadcast_kind(a, b, n.op);
        const std::size_t cols = g.cols();
        const auto G = g.data();
        if (nodes_[n.lhs].needs_grad) {
          Tensor& da = adjoint_slot(adj, n.lhs, a);
          auto D = da.data();
          auto B = b.data();
          for (std::size_t i = 0; i < G.size(); ++i) {
            const double local = n.op == Op::Mul ? B[bidx(kind, false, i, cols)] : 1.0;
            D[bidx(kind, true, i, cols)] += G[i] * local;
          }
        }
        if (nodes_[n.rhs].needs_grad) {
          Tensor& db = adjoint_slot(adj, n.rhs, b);
          auto D = db.data();
          auto A = a.data();
          for (std::size_t i = 0; i < G.size(); ++i) {
            const double local = n.op == Op::Mul ? A[bidx(kind, true, i, cols)] : (n.op == Op::Sub ? -1.0 : 1.0);
            D[bidx(kind, false, i, cols)] += G[i] * local;
          }
        }
        break;
      }
      case Op::Exp:
      case Op::Log:
      case Op::Tanh:
      case Op::Softplus:
      case Op::LogGamma:
      case Op::Digamma: {
        if (!nodes_[n.lhs].needs_grad) break;
        const Tensor& x = nodes_[n.lhs].value;
        Tensor& dx = adjoint_slot(adj, n.lhs, x);
        auto D = dx.data();
        auto X = x.data();
        auto Y = n.value.data();
        auto G = g.data();
        for (std::size_t i = 0; i < G.size(); ++i) {
          double local = 0.0;
          switch (n.op) {
            case Op::Exp: local = Y[i]; break;
            case Op::Log: local = 1.0 / X[i]; break;
            case Op::Tanh: local = 1.0 - Y[i] * Y[i]; break;
            case Op::Softplus: local = sigmoid(X[i]); break;
            case Op::LogGamma: local = boost::math::digamma(X[i]); break;
            default: local = boost::math::trigamma(X[i]); break;
          }
          D[i] += G[i] * local;
        }
        break;
      }
      case Op::Sum:
      case Op::Mean: {
        if (!nodes_[n.lhs].needs_grad) break;
        const Tensor& x = nodes_[n.lhs].value;
        Tensor& dx = adjoint_slot(adj, n.lhs, x);
        const double k = n.op == Op::Sum ? g.item() : g.item() / static_cast<double>(x.size());
        for (double& v : dx.data()) v += k;
        break;
      }
      case Op::SliceCols: {
        if (!nodes_[n.lhs].needs_grad) break;
        const Tensor& x = nodes_[n.lhs].value;
        Tensor& dx = adjoint_slot(adj, n.lhs, x);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          for (std::size_t c = 0; c < g.cols(); ++c) dx(r, n.begin + c) += g(r, c);
        }
        break;
      }
      case Op::ConcatCols: {
        std::size_t offset = 0;
        for (std::size_t operand : n.operands) {
          const Tensor& x = nodes_[operand].value;
          if (nodes_[operand].needs_grad) {
            Tensor& dx = adjoint_slot(adj, operand, x);
            for (std::size_t r = 0; r < x.rows(); ++r) {
              for (std::size_t c = 0; c < x.cols(); ++c) dx(r, c) += g(r, offset + c);
            }
          }
          offset += x.cols();
        }
        break;
      }
      case Op::Scale: {
        if (!nodes_[n.lhs].needs_grad) break;
        Tensor scaled = map(g, [k = n.scalar](double v) { return v * k; });
        accumulate(adj[n.lhs], scaled);
        break;
      }
      case Op::View: {
        if (!nodes_[n.lhs].needs_grad) break;
        Tensor& dx = adjoint_slot(adj, n.lhs, nodes_[n.lhs].value);
        auto D = dx.data();
        auto G = g.data();
        for (std::size_t i = 0; i < G.size(); ++i) D[n.begin + i] += G[i];
        break;
      }
    }
  }

  const Tensor& result = adj[wrt.id()];
  if (result.size() == 0) return std::vector<double>(nodes_[wrt.id()].value.size(), 0.0);
  if (!result.all_finite()) throw NumericError("non-finite gradient");
  return result.storage();
}

}  // namespace flowtrpo
