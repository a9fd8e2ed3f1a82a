#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "flowtrpo/diffcore/flat_params.hpp"
#include "flowtrpo/diffcore/rng.hpp"
#include "flowtrpo/nets/mlp.hpp"

namespace flowtrpo::flows {

/// Disables the tanh squashing of scale outputs.
inline constexpr double kNoClamp = std::numeric_limits<double>::infinity();

/// Affine coupling layer on R^m with split d = floor(m/2):
///
///   y[:d] = x[:d]
///   y[d:] = x[d:] * exp(s(x[:d])) + t(x[:d])
///
/// s is squashed to (-clamp, clamp) via clamp * tanh(raw / clamp), so the
/// per-row log-determinant sum_j s_j stays within +-(m - d) * clamp.
///
/// For m = 1 there is nothing to condition on; s and t are then single free
/// parameters and the layer is a scalar affine map.
class CouplingLayer {
 public:
  struct Output {
    Var value;
    /// N x 1 log|det dy/dx| of the forward map, evaluated at this row.
    Var logdet;
  };

  CouplingLayer(std::size_t dim, const std::vector<std::size_t>& hidden, double scale_clamp,
                const std::string& prefix, ParamLayout& layout);

  std::size_t dim() const { return dim_; }
  std::size_t split() const { return split_; }
  double scale_clamp() const { return clamp_; }

  Output forward(Var theta, Var x) const;
  /// Maps y back to x. `logdet` is the forward log-determinant at that x.
  Output inverse(Var theta, Var y) const;

  void init(std::span<double> flat, Rng& rng) const;
  /// Conditioner networks; only meaningful when dim() > 1.
  const nets::Mlp& scale_net() const { return scale_net_; }
  const nets::Mlp& shift_net() const { return shift_net_; }
  /// Free scalar parameters used when dim() == 1.
  const ParamSlot& scalar_scale() const { return scalar_scale_; }
  const ParamSlot& scalar_shift() const { return scalar_shift_; }

 private:
  struct Conditioned {
    Var scale;  // clamped, N x (m - d)
    Var shift;
  };
  Conditioned condition(Var theta, Var passthrough, std::size_t rows) const;
  Var clamp(Var raw) const;

  std::size_t dim_;
  std::size_t split_;
  double clamp_;
  nets::Mlp scale_net_;
  nets::Mlp shift_net_;
  ParamSlot scalar_scale_;
  ParamSlot scalar_shift_;
};

/// Column reversal; its own inverse and volume preserving.
Var reverse_cols(Var x);

/// Row-wise log N(x; 0, I), N x 1.
Var standard_normal_log_density(Var x);

}  // namespace flowtrpo::flows
