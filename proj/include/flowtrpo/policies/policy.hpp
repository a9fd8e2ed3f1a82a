#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flowtrpo/diffcore/flat_params.hpp"
#include "flowtrpo/diffcore/rng.hpp"
#include "flowtrpo/diffcore/tape.hpp"

namespace flowtrpo::policies {

enum class PolicyKind { Gaussian, GaussianTanh, Gmm, Beta, Flow };

std::string to_string(PolicyKind kind);
/// Accepts "gaussian", "gaussian-tanh", "gmm", "beta", "flow".
PolicyKind parse_policy_kind(std::string_view name);

/// Axis-aligned action box. Only the Beta policy is confined to it; the
/// environment decides whether out-of-box actions are clipped.
struct ActionBox {
  std::vector<double> low;
  std::vector<double> high;

  static ActionBox symmetric(std::size_t dim, double bound);
  friend bool operator==(const ActionBox&, const ActionBox&) = default;
};

/// Architecture knobs shared by all kinds; each kind reads the ones it needs.
struct PolicyArch {
  /// Mean net (Gaussian, GMM) or concentration net (Beta).
  std::vector<std::size_t> hidden{64, 64};
  std::size_t gmm_components = 2;
  std::size_t flow_layers = 4;
  /// Units per hidden layer of the coupling conditioners (l1).
  std::size_t flow_hidden = 3;
  /// Hidden layers per coupling conditioner.
  std::size_t flow_depth = 3;
  std::vector<std::size_t> state_hidden{64, 64};
  double scale_clamp = 5.0;
  std::size_t inject_after = 1;

  friend bool operator==(const PolicyArch&, const PolicyArch&) = default;
};

/// Draw of one action per row and its log-density, both on the tape.
struct Draw {
  Var actions;
  Var log_prob;
};

/// Common policy contract. Everything TRPO needs is log pi(a|s) and its
/// gradient; sampling and closed forms are conveniences per kind.
///
/// `states` arguments may carry one row per action or a single shared row.
class Policy {
 public:
  Policy(PolicyKind kind, std::size_t obs_dim, std::size_t act_dim, PolicyArch arch, ActionBox box);
  virtual ~Policy() = default;
  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  PolicyKind kind() const { return kind_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }
  const PolicyArch& arch() const { return arch_; }
  const ActionBox& box() const { return box_; }
  const ParamLayout& layout() const { return layout_; }

  /// Fresh parameters, deterministic per rng state.
  FlatParams init(Rng& rng) const;

  /// N x 1 log-densities. Numeric failures are rethrown naming the policy kind.
  Var log_prob(Var theta, Var states, Var actions) const;
  /// `n` draws; states must have n rows or a single row.
  Draw sample(Var theta, Var states, std::size_t n, Rng& rng) const;
  /// Whether sampled actions carry a pathwise gradient.
  virtual bool reparameterized() const { return true; }
  /// Closed-form per-row entropy, if the kind has one.
  virtual std::optional<Var> entropy(Var theta, Var states) const;
  /// Closed-form per-row KL(old || new), if the kind has one. `old_theta` is treated as constant.
  virtual std::optional<Var> kl(Var old_theta, Var theta, Var states) const;

 protected:
  virtual Var log_prob_impl(Var theta, Var states, Var actions) const = 0;
  virtual Draw sample_impl(Var theta, Var states, std::size_t n, Rng& rng) const = 0;
  virtual void init_into(std::span<double> flat, Rng& rng) const = 0;
  /// Collapses a batch of identical state rows to one shared row.
  static Var shared_states(Var states);

  ParamLayout layout_;

 private:
  PolicyKind kind_;
  std::size_t obs_dim_;
  std::size_t act_dim_;
  PolicyArch arch_;
  ActionBox box_;
};

std::unique_ptr<Policy> make_policy(PolicyKind kind, std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch,
                                    const ActionBox& box);

/// Sampled actions and log-densities evaluated off-graph.
struct SampledActions {
  Tensor actions;
  std::vector<double> log_probs;
};

SampledActions sample_actions(const Policy& policy, std::span<const double> theta, const Tensor& states,
                              std::size_t n, Rng& rng);
std::vector<double> log_probs(const Policy& policy, std::span<const double> theta, const Tensor& states,
                              const Tensor& actions);

}  // namespace flowtrpo::policies
