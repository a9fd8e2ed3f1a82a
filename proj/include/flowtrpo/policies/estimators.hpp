#pragma once

#include <cstddef>
#include <span>

#include "flowtrpo/policies/policy.hpp"

namespace flowtrpo::policies {

struct EntropyEstimate {
  /// Differentiable 1x1 estimate.
  Var value;
  std::size_t n_samples = 0;
  /// Monte-Carlo standard error of the estimate.
  double std_error = 0.0;
};

/// (1/N) sum_i -log pi(f(s, eps_i) | s) with N draws per state row.
///
/// Reparameterized kinds differentiate through both the sample path and the
/// density. For the Beta policy the pathwise term is unavailable, so the
/// estimate carries a zero-valued score-function correction whose gradient is
/// -E[(log pi(a) - b) grad log pi(a)].
EntropyEstimate entropy_mc(const Policy& policy, Var theta, Var states, std::size_t n, Rng& rng);

/// Mean over states and M draws a ~ pi_old of [log pi_old(a|s) - log pi_new(a|s)].
/// Differentiable with respect to `theta` only. Never clamped at zero.
Var kl_mc(const Policy& policy, std::span<const double> old_theta, Var theta, Var states, std::size_t m, Rng& rng);

/// Same estimator on a fixed sample set whose old log-densities are known.
Var kl_on_samples(const Policy& policy, Var theta, Var states, Var actions, std::span<const double> old_log_probs);

/// Ratio form mean[(r - 1) - log r], r = pi_new / pi_old, on the same fixed
/// samples. Same expectation as kl_on_samples under pi_old, never negative, and
/// its Hessian at theta_old is the empirical Fisher.
Var kl_ratio_on_samples(const Policy& policy, Var theta, Var states, Var actions,
                        std::span<const double> old_log_probs);

/// Each state row repeated `times` consecutively.
Tensor repeat_each_row(const Tensor& states, std::size_t times);

}  // namespace flowtrpo::policies
