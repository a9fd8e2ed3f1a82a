#include "flowtrpo/nets/adam.hpp"

#include <cmath>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::nets {

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size()) throw ConfigError("adam: gradient length mismatch");
  if (first.size() != params.size()) {
    first.assign(params.size(), 0.0);
    second.assign(params.size(), 0.0);
    steps = 0;
  }
  ++steps;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
  for (std::size_t i = 0; i < params.size(); ++i) {
    first[i] = beta1 * first[i] + (1.0 - beta1) * grad[i];
    second[i] = beta2 * second[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= step_size * (first[i] / c1) / (std::sqrt(second[i] / c2) + epsilon);
  }
}

}  // namespace flowtrpo::nets
