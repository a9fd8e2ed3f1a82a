#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flowtrpo/diffcore/tape.hpp"
#include "flowtrpo/diffcore/tensor.hpp"

namespace flowtrpo {

/// One named block of a flat parameter vector.
struct ParamSlot {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const ParamSlot&, const ParamSlot&) = default;
};

/// Ordered, contiguous (name, shape, offset) triples.
class ParamLayout {
 public:
  /// Appends a block; returns its slot. Duplicate names are rejected.
  const ParamSlot& add(std::string name, std::size_t rows, std::size_t cols);

  const std::vector<ParamSlot>& slots() const { return slots_; }
  std::size_t total() const { return total_; }
  std::optional<ParamSlot> find(const std::string& name) const;

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  std::vector<ParamSlot> slots_;
  std::size_t total_ = 0;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Flat parameter vector plus the layout that names its pieces.
struct FlatParams {
  ParamLayout layout;
  std::vector<double> values;

  FlatParams() = default;
  explicit FlatParams(ParamLayout l) : layout(std::move(l)), values(layout.total(), 0.0) {}
  FlatParams(ParamLayout l, std::vector<double> v);

  Tensor block(const std::string& name) const;
  /// Binds the whole vector as a 1xP differentiable leaf.
  Var bind(Tape& tape) const { return tape.leaf(Tensor::row(values)); }
};

NamedTensors unflatten(const FlatParams& params);
/// Inverse of unflatten; every slot of `layout` must be present with matching shape.
FlatParams flatten(const ParamLayout& layout, const NamedTensors& blocks);

/// Window of a bound parameter leaf corresponding to `slot`.
inline Var slot_view(Var theta, const ParamSlot& slot) { return view(theta, slot.offset, slot.rows, slot.cols); }

}  // namespace flowtrpo
