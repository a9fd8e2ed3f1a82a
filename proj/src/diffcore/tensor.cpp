#include "flowtrpo/diffcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                      std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::column(std::span<const double> values) {
  return Tensor(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ConfigError("ragged initializer for tensor");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

double Tensor::item() const {
  if (!is_scalar()) {
    throw ContractError("item() on a " + std::to_string(rows_) + "x" + std::to_string(cols_) + " tensor");
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::rows_slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows_) throw ConfigError("row slice out of range");
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                          data_.begin() + static_cast<std::ptrdiff_t>(end * cols_));
  return Tensor(end - begin, cols_, std::move(out));
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ConfigError("vstack: column mismatch");
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor(rows, cols, std::move(data));
}

}  // namespace flowtrpo
