#include "flowtrpo/flows/coupling.hpp"

#include <cmath>
#include <numbers>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::flows {

CouplingLayer::CouplingLayer(std::size_t dim, const std::vector<std::size_t>& hidden, double scale_clamp,
                             const std::string& prefix, ParamLayout& layout)
    : dim_(dim), split_(dim / 2), clamp_(scale_clamp) {
  if (dim == 0) throw ConfigError("coupling layer of dimension 0");
  if (!(scale_clamp > 0.0)) throw ConfigError("coupling scale clamp must be positive");
  if (dim == 1) {
    scalar_scale_ = layout.add(prefix + "/s", 1, 1);
    scalar_shift_ = layout.add(prefix + "/t", 1, 1);
    return;
  }
  const std::size_t out = dim_ - split_;
  scale_net_ = nets::Mlp(nets::MlpSpec{split_, out, hidden, nets::FinalActivation::None}, prefix + "/s", layout);
  shift_net_ = nets::Mlp(nets::MlpSpec{split_, out, hidden, nets::FinalActivation::None}, prefix + "/t", layout);
}

Var CouplingLayer::clamp(Var raw) const {
  if (std::isinf(clamp_)) return raw;
  return clamp_ * tanh(raw * (1.0 / clamp_));
}

CouplingLayer::Conditioned CouplingLayer::condition(Var theta, Var passthrough, std::size_t rows) const {
  if (dim_ == 1) {
    Var s = clamp(slot_view(theta, scalar_scale_));
    Var t = slot_view(theta, scalar_shift_);
    return {repeat_rows(s, rows), t};
  }
  return {clamp(scale_net_.forward(theta, passthrough)), shift_net_.forward(theta, passthrough)};
}

CouplingLayer::Output CouplingLayer::forward(Var theta, Var x) const {
  if (x.cols() != dim_) throw ConfigError("coupling forward: expected " + std::to_string(dim_) + " columns");
  if (dim_ == 1) {
    auto [s, t] = condition(theta, x, x.rows());
    return {x * exp(s) + t, s};
  }
  Var kept = slice_cols(x, 0, split_);
  Var moved = slice_cols(x, split_, dim_);
  auto [s, t] = condition(theta, kept, x.rows());
  Var y = concat_cols({kept, moved * exp(s) + t});
  return {y, row_sum(s)};
}

CouplingLayer::Output CouplingLayer::inverse(Var theta, Var y) const {
  if (y.cols() != dim_) throw ConfigError("coupling inverse: expected " + std::to_string(dim_) + " columns");
  if (dim_ == 1) {
    auto [s, t] = condition(theta, y, y.rows());
    return {(y - t) * exp(-s), s};
  }
  Var kept = slice_cols(y, 0, split_);
  Var moved = slice_cols(y, split_, dim_);
  auto [s, t] = condition(theta, kept, y.rows());
  Var x = concat_cols({kept, (moved - t) * exp(-s)});
  return {x, row_sum(s)};
}

void CouplingLayer::init(std::span<double> flat, Rng& rng) const {
  if (dim_ == 1) {
    flat[scalar_scale_.offset] = 0.0;
    flat[scalar_shift_.offset] = 0.0;
    return;
  }
  scale_net_.init(flat, rng);
  shift_net_.init(flat, rng);
}

Var reverse_cols(Var x) {
  const std::size_t m = x.cols();
  if (m == 1) return x;
  std::vector<Var> cols;
  cols.reserve(m);
  for (std::size_t c = m; c-- > 0;) cols.push_back(slice_cols(x, c, c + 1));
  return concat_cols(cols);
}

Var standard_normal_log_density(Var x) {
  const double norm = 0.5 * static_cast<double>(x.cols()) * std::log(2.0 * std::numbers::pi);
  return -0.5 * row_sum(square(x)) - norm;
}

}  // namespace flowtrpo::flows
