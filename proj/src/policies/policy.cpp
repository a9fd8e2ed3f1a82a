#include "flowtrpo/policies/policy.hpp"

#include <algorithm>

#include "flowtrpo/diffcore/errors.hpp"
#include "flowtrpo/policies/kinds.hpp"

namespace flowtrpo::policies {

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Gaussian: return "gaussian";
    case PolicyKind::GaussianTanh: return "gaussian-tanh";
    case PolicyKind::Gmm: return "gmm";
    case PolicyKind::Beta: return "beta";
    case PolicyKind::Flow: return "flow";
  }
  return "?";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "gaussian") return PolicyKind::Gaussian;
  if (name == "gaussian-tanh") return PolicyKind::GaussianTanh;
  if (name == "gmm") return PolicyKind::Gmm;
  if (name == "beta") return PolicyKind::Beta;
  if (name == "flow") return PolicyKind::Flow;
  throw ConfigError("unknown policy kind '" + std::string(name) + "'");
}

ActionBox ActionBox::symmetric(std::size_t dim, double bound) {
  return ActionBox{std::vector<double>(dim, -bound), std::vector<double>(dim, bound)};
}

Policy::Policy(PolicyKind kind, std::size_t obs_dim, std::size_t act_dim, PolicyArch arch, ActionBox box)
    : kind_(kind), obs_dim_(obs_dim), act_dim_(act_dim), arch_(std::move(arch)), box_(std::move(box)) {
  if (obs_dim_ == 0 || act_dim_ == 0) throw ConfigError("policy dimensions must be positive");
  if (box_.low.size() != act_dim_ || box_.high.size() != act_dim_) {
    throw ConfigError("action box does not match act_dim");
  }
  for (std::size_t j = 0; j < act_dim_; ++j) {
    if (!(box_.low[j] < box_.high[j])) throw ConfigError("action box has an empty extent");
  }
}

FlatParams Policy::init(Rng& rng) const {
  FlatParams params(layout_);
  init_into(params.values, rng);
  return params;
}

namespace {

template <typename F>
auto named_failure(PolicyKind kind, F&& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    const std::string prefix = to_string(kind) + " policy: ";
    if (std::string_view(e.what()).starts_with(prefix)) throw;
    throw NumericError(prefix + e.what());
  }
}

}  // namespace

Var Policy::log_prob(Var theta, Var states, Var actions) const {
  return named_failure(kind_, [&] { return log_prob_impl(theta, states, actions); });
}

Draw Policy::sample(Var theta, Var states, std::size_t n, Rng& rng) const {
  return named_failure(kind_, [&] { return sample_impl(theta, states, n, rng); });
}

std::optional<Var> Policy::entropy(Var, Var) const { return std::nullopt; }
std::optional<Var> Policy::kl(Var, Var, Var) const { return std::nullopt; }

Var Policy::shared_states(Var states) {
  const Tensor& s = states.value();
  if (s.rows() <= 1) return states;
  const auto first = s.row_span(0);
  for (std::size_t r = 1; r < s.rows(); ++r) {
    if (!std::equal(first.begin(), first.end(), s.row_span(r).begin())) return states;
  }
  return states.tape().constant(Tensor::row(first));
}

std::unique_ptr<Policy> make_policy(PolicyKind kind, std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch,
                                    const ActionBox& box) {
  switch (kind) {
    case PolicyKind::Gaussian:
      return std::make_unique<GaussianPolicy>(obs_dim, act_dim, arch, box, false);
    case PolicyKind::GaussianTanh:
      return std::make_unique<GaussianPolicy>(obs_dim, act_dim, arch, box, true);
    case PolicyKind::Gmm:
      return std::make_unique<GmmPolicy>(obs_dim, act_dim, arch, box);
    case PolicyKind::Beta:
      return std::make_unique<BetaPolicy>(obs_dim, act_dim, arch, box);
    case PolicyKind::Flow:
      return std::make_unique<FlowPolicy>(obs_dim, act_dim, arch, box);
  }
  throw ConfigError("unhandled policy kind");
}

SampledActions sample_actions(const Policy& policy, std::span<const double> theta, const Tensor& states,
                              std::size_t n, Rng& rng) {
  Tape tape;
  Var t = tape.constant(Tensor::row(theta));
  Draw draw = policy.sample(t, tape.constant(states), n, rng);
  const auto& lp = draw.log_prob.value().storage();
  return {draw.actions.value(), lp};
}

std::vector<double> log_probs(const Policy& policy, std::span<const double> theta, const Tensor& states,
                              const Tensor& actions) {
  Tape tape;
  Var t = tape.constant(Tensor::row(theta));
  return policy.log_prob(t, tape.constant(states), tape.constant(actions)).value().storage();
}

}  // namespace flowtrpo::policies
