#pragma once

#include <span>
#include <vector>

namespace flowtrpo::nets {

/// Adaptive-moment gradient descent state for one flat parameter vector.
struct Adam {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<double> first;
  std::vector<double> second;
  long steps = 0;

  /// Moves `params` against `grad` (minimization).
  void step(std::span<double> params, std::span<const double> grad);

  friend bool operator==(const Adam&, const Adam&) = default;
};

}  // namespace flowtrpo::nets
