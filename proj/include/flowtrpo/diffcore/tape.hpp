#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <deque>
#include <vector>

#include "flowtrpo/diffcore/tensor.hpp"

namespace flowtrpo {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class Op : std::uint8_t {
  Leaf,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Exp,
  Log,
  Tanh,
  Softplus,
  LogGamma,
  Digamma,
  Sum,
  Mean,
  SliceCols,
  ConcatCols,
  Scale,
  View,
};

const char* op_name(Op op);

/// Reverse-mode differentiation record. Nodes are appended in evaluation order,
/// so operands always precede their consumers.
///
/// Elementwise binary ops accept equal shapes, a 1xC row against an RxC
/// operand, or a 1x1 scalar against anything. No other broadcasting exists.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Input that never receives an adjoint.
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_[v.id()].op; }

  /// d output / d wrt, flattened row-major. `output` must be 1x1 and `wrt` a leaf.
  std::vector<double> gradient(Var output, Var wrt) const;

  /// Number of nodes visited by the most recent backward pass.
  std::size_t last_backward_visits() const { return last_visits_; }

 private:
  struct Node {
    Op op = Op::Constant;
    Tensor value;
    std::size_t lhs = 0;
    std::size_t rhs = 0;
    std::vector<std::size_t> operands;  // ConcatCols only
    double scalar = 0.0;                // Scale factor
    std::size_t begin = 0;              // SliceCols first column / View offset
    bool needs_grad = false;
  };

  Var push(Node node);

  friend struct TapeRecorder;

  std::deque<Node> nodes_;  // deque keeps value references stable while recording
  mutable std::size_t last_visits_ = 0;
};

Var matmul(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
/// Elementwise product.
Var operator*(Var a, Var b);
Var exp(Var x);
/// Throws DomainError on any non-positive entry.
Var log(Var x);
Var tanh(Var x);
/// log(1 + e^x), evaluated stably.
Var softplus(Var x);
/// Log-gamma for positive arguments.
Var lgamma(Var x);
/// Digamma for positive arguments.
Var digamma(Var x);
/// Sum of all entries, 1x1.
Var sum(Var x);
/// Mean of all entries, 1x1.
Var mean(Var x);
/// Columns [begin, end).
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
Var scale(Var x, double factor);
/// Reshaped window [offset, offset + rows*cols) of a row-major tensor.
Var view(Var flat, std::size_t offset, std::size_t rows, std::size_t cols);

inline Var operator-(Var x) { return scale(x, -1.0); }
inline Var operator*(double k, Var x) { return scale(x, k); }
inline Var operator*(Var x, double k) { return scale(x, k); }
inline Var operator+(Var x, double c) { return x + x.tape().constant(c); }
inline Var operator-(Var x, double c) { return x + x.tape().constant(-c); }
inline Var square(Var x) { return x * x; }

/// Row sums of an RxC tensor as an Rx1 column (matmul against ones).
Var row_sum(Var x);
/// Replicates a 1xC row R times (matmul of a ones column with the row).
Var repeat_rows(Var row, std::size_t rows);

}  // namespace flowtrpo
