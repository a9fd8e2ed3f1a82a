#include "flowtrpo/diffcore/flat_params.hpp"

#include <algorithm>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo {

const ParamSlot& ParamLayout::add(std::string name, std::size_t rows, std::size_t cols) {
  if (find(name)) throw ConfigError("duplicate parameter block '" + name + "'");
  slots_.push_back(ParamSlot{std::move(name), rows, cols, total_});
  total_ += rows * cols;
  return slots_.back();
}

std::optional<ParamSlot> ParamLayout::find(const std::string& name) const {
  auto it = std::find_if(slots_.begin(), slots_.end(), [&](const ParamSlot& s) { return s.name == name; });
  if (it == slots_.end()) return std::nullopt;
  return *it;
}

FlatParams::FlatParams(ParamLayout l, std::vector<double> v) : layout(std::move(l)), values(std::move(v)) {
  if (values.size() != layout.total()) {
    throw ConfigError("parameter vector has " + std::to_string(values.size()) + " values, layout needs " +
                      std::to_string(layout.total()));
  }
}

Tensor FlatParams::block(const std::string& name) const {
  auto slot = layout.find(name);
  if (!slot) throw ConfigError("unknown parameter block '" + name + "'");
  auto first = values.begin() + static_cast<std::ptrdiff_t>(slot->offset);
  return Tensor(slot->rows, slot->cols, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(slot->size())));
}

NamedTensors unflatten(const FlatParams& params) {
  NamedTensors out;
  out.reserve(params.layout.slots().size());
  for (const auto& slot : params.layout.slots()) out.emplace_back(slot.name, params.block(slot.name));
  return out;
}

FlatParams flatten(const ParamLayout& layout, const NamedTensors& blocks) {
  FlatParams out(layout);
  for (const auto& slot : layout.slots()) {
    auto it = std::find_if(blocks.begin(), blocks.end(), [&](const auto& b) { return b.first == slot.name; });
    if (it == blocks.end()) throw ConfigError("missing parameter block '" + slot.name + "'");
    if (it->second.rows() != slot.rows || it->second.cols() != slot.cols) {
      throw ConfigError("parameter block '" + slot.name + "' has the wrong shape");
    }
    std::copy(it->second.data().begin(), it->second.data().end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(slot.offset));
  }
  if (blocks.size() != layout.slots().size()) throw ConfigError("unexpected extra parameter blocks");
  return out;
}

}  // namespace flowtrpo
