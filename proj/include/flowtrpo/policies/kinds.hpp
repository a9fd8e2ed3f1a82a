#pragma once

#include <atomic>
#include <cstddef>

#include "flowtrpo/flows/flow_stack.hpp"
#include "flowtrpo/nets/mlp.hpp"
#include "flowtrpo/policies/policy.hpp"

namespace flowtrpo::policies {

/// N(mu(s), diag(sigma^2)) with a state-independent log-stddev row. With
/// `tanh_mean` the mean net ends in tanh so mu(s) lies in [-1, 1].
class GaussianPolicy final : public Policy {
 public:
  GaussianPolicy(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch, const ActionBox& box,
                 bool tanh_mean);

  std::optional<Var> entropy(Var theta, Var states) const override;
  std::optional<Var> kl(Var old_theta, Var theta, Var states) const override;

  Var mean(Var theta, Var states) const;
  Var log_std(Var theta) const { return slot_view(theta, log_std_); }
  const nets::Mlp& mean_net() const { return mean_net_; }

 protected:
  Var log_prob_impl(Var theta, Var states, Var actions) const override;
  Draw sample_impl(Var theta, Var states, std::size_t n, Rng& rng) const override;
  void init_into(std::span<double> flat, Rng& rng) const override;

 private:
  nets::Mlp mean_net_;
  ParamSlot log_std_;
};

/// Uniform-weight mixture of K factorized Gaussians. One mean net emits all
/// K means; each component has its own log-stddev row.
class GmmPolicy final : public Policy {
 public:
  GmmPolicy(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch, const ActionBox& box);


  std::size_t components() const { return components_; }
  Var component_mean(Var theta, Var shared_states, std::size_t k) const;
  Var component_log_std(Var theta, std::size_t k) const;
  const nets::Mlp& mean_net() const { return mean_net_; }
  const ParamSlot& log_std_slot() const { return log_std_; }

 protected:
  Var log_prob_impl(Var theta, Var states, Var actions) const override;
  Draw sample_impl(Var theta, Var states, std::size_t n, Rng& rng) const override;
  void init_into(std::span<double> flat, Rng& rng) const override;

 private:
  std::size_t components_;
  nets::Mlp mean_net_;
  ParamSlot log_std_;
};

/// Product of Beta(alpha_j(s), beta_j(s)) on (0,1), mapped affinely onto the
/// action box. Concentrations are softplus(f(s)) + 1.
class BetaPolicy final : public Policy {
 public:
  /// Actions are pulled this far inside (0,1) before evaluating the density.
  static constexpr double kBoundaryMargin = 1e-6;
  /// Concentrations above this are treated as a numeric failure.
  static constexpr double kMaxConcentration = 1e6;

  BetaPolicy(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch, const ActionBox& box);

  bool reparameterized() const override { return false; }
  std::optional<Var> entropy(Var theta, Var states) const override;
  std::optional<Var> kl(Var old_theta, Var theta, Var states) const override;

  struct Concentrations {
    Var alpha;
    Var beta;
  };
  Concentrations concentrations(Var theta, Var states) const;
  /// Number of actions clamped off the support boundary so far.
  std::size_t boundary_clamps() const { return boundary_clamps_.load(); }
  const nets::Mlp& net() const { return net_; }

 protected:
  Var log_prob_impl(Var theta, Var states, Var actions) const override;
  Draw sample_impl(Var theta, Var states, std::size_t n, Rng& rng) const override;
  void init_into(std::span<double> flat, Rng& rng) const override;

 private:
  double log_box_volume() const;

  nets::Mlp net_;
  mutable std::atomic<std::size_t> boundary_clamps_{0};
};

/// Normalizing-flow policy: a = f(s, eps), eps ~ N(0, I), exact density by inversion.
class FlowPolicy final : public Policy {
 public:
  FlowPolicy(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch, const ActionBox& box);


  const flows::FlowStack& flow() const { return flow_; }

 protected:
  Var log_prob_impl(Var theta, Var states, Var actions) const override;
  Draw sample_impl(Var theta, Var states, std::size_t n, Rng& rng) const override;
  void init_into(std::span<double> flat, Rng& rng) const override;

 private:
  flows::FlowStack flow_;
};

flows::FlowSpec flow_spec_for(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch);

}  // namespace flowtrpo::policies
