#include "flowtrpo/policies/estimators.hpp"

#include <cmath>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::policies {

Tensor repeat_each_row(const Tensor& states, std::size_t times) {
  Tensor out(states.rows() * times, states.cols());
  for (std::size_t r = 0; r < states.rows(); ++r) {
    for (std::size_t k = 0; k < times; ++k) {
      for (std::size_t c = 0; c < states.cols(); ++c) out(r * times + k, c) = states(r, c);
    }
  }
  return out;
}

namespace {

double std_error_of(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace

EntropyEstimate entropy_mc(const Policy& policy, Var theta, Var states, std::size_t n, Rng& rng) {
  if (n == 0) throw ConfigError("entropy_mc needs at least one sample");
  Tape& tape = theta.tape();
  Var expanded = states.rows() == 1 ? states : tape.constant(repeat_each_row(states.value(), n));
  const std::size_t total = states.rows() * n;
  Draw draw = policy.sample(theta, expanded, total, rng);
  const auto& lp = draw.log_prob.value().storage();

  EntropyEstimate est;
  est.n_samples = total;
  est.std_error = std_error_of(lp);
  Var neg_mean = -mean(draw.log_prob);
  if (policy.reparameterized()) {
    est.value = neg_mean;
    return est;
  }
  // Score-function correction; its value is exactly zero.
  double baseline = 0.0;
  for (double v : lp) baseline += v;
  baseline /= static_cast<double>(lp.size());
  Tensor weights(lp.size(), 1);
  Tensor frozen(lp.size(), 1);
  for (std::size_t i = 0; i < lp.size(); ++i) {
    weights(i, 0) = lp[i] - baseline;
    frozen(i, 0) = lp[i];
  }
  Var centred = draw.log_prob - tape.constant(std::move(frozen));
  est.value = neg_mean - mean(tape.constant(std::move(weights)) * centred);
  return est;
}

Var kl_mc(const Policy& policy, std::span<const double> old_theta, Var theta, Var states, std::size_t m, Rng& rng) {
  if (m == 0) throw ConfigError("kl_mc needs at least one draw per state");
  const Tensor expanded = states.rows() == 1 ? states.value() : repeat_each_row(states.value(), m);
  const std::size_t total = states.rows() * m;
  SampledActions old = sample_actions(policy, old_theta, expanded, total, rng);
  Tape& tape = theta.tape();
  return kl_on_samples(policy, theta, tape.constant(expanded), tape.constant(std::move(old.actions)), old.log_probs);
}

Var kl_on_samples(const Policy& policy, Var theta, Var states, Var actions, std::span<const double> old_log_probs) {
  if (old_log_probs.size() != actions.rows()) throw ConfigError("kl_on_samples: log-prob count mismatch");
  Tape& tape = theta.tape();
  Var old_lp = tape.constant(Tensor::column(old_log_probs));
  return mean(old_lp - policy.log_prob(theta, states, actions));
}

Var kl_ratio_on_samples(const Policy& policy, Var theta, Var states, Var actions,
                        std::span<const double> old_log_probs) {
  if (old_log_probs.size() != actions.rows()) throw ConfigError("kl_ratio_on_samples: log-prob count mismatch");
  Tape& tape = theta.tape();
  Var log_ratio = policy.log_prob(theta, states, actions) - tape.constant(Tensor::column(old_log_probs));
  return mean(exp(log_ratio) - 1.0 - log_ratio);
}

}  // namespace flowtrpo::policies
