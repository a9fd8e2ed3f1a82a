#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flowtrpo/flows/coupling.hpp"
#include "flowtrpo/nets/mlp.hpp"

namespace flowtrpo::flows {

struct FlowSpec {
  std::size_t action_dim = 0;
  std::size_t obs_dim = 0;
  std::size_t layers = 4;
  /// Hidden widths of each coupling conditioner (s and t).
  std::vector<std::size_t> conditioner_hidden{3, 3, 3};
  /// Hidden widths of the state embedding L(s).
  std::vector<std::size_t> state_hidden{64, 64};
  double scale_clamp = 5.0;
  /// The state embedding is added after this many coupling layers (0 = before the first).
  std::size_t inject_after = 1;

  void validate() const;
  friend bool operator==(const FlowSpec&, const FlowSpec&) = default;
};

/// State-conditioned normalizing flow
///
///   a = g_K o ... o g_{j+1} ( L(s) + g_j o ... o g_1(eps) ),   eps ~ N(0, I)
///
/// with j = inject_after and a column reversal in front of every layer but the
/// first. Densities follow from change of variables:
///
///   log pi(a|s) = log N(eps) - sum_k log|det dg_k|.
class FlowStack {
 public:
  struct Pass {
    Var value;
    /// N x 1 sum of forward log-determinants over all layers.
    Var logdet;
    std::vector<Var> layer_logdets;
  };

  FlowStack(FlowSpec spec, const std::string& prefix, ParamLayout& layout);

  const FlowSpec& spec() const { return spec_; }
  const CouplingLayer& layer(std::size_t i) const { return layers_.at(i); }
  const nets::Mlp& state_net() const { return state_net_; }

  /// States may hold one row per noise row or a single row shared by all.
  Pass push_forward(Var theta, Var states, Var noise) const;
  Pass pull_back(Var theta, Var states, Var actions) const;

  /// Action and its log-density for given noise (reparameterized).
  struct Sample {
    Var actions;
    Var log_prob;
  };
  Sample sample(Var theta, Var states, Var noise) const;
  /// N x 1 log pi(a|s) through full inversion.
  Var log_prob(Var theta, Var states, Var actions) const;

  void init(std::span<double> flat, Rng& rng) const;

 private:
  Var embed(Var theta, Var states) const;

  FlowSpec spec_;
  std::vector<CouplingLayer> layers_;
  nets::Mlp state_net_;
};

}  // namespace flowtrpo::flows
