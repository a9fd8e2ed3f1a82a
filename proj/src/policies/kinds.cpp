#include "flowtrpo/policies/kinds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::policies {

namespace {

double half_log_two_pi() { return 0.5 * std::log(2.0 * std::numbers::pi); }

Var diag_gaussian_log_density(Var actions, Var mean, Var log_std) {
  const double m = static_cast<double>(actions.cols());
  Var z = (actions - mean) * exp(-log_std);
  return -0.5 * row_sum(square(z)) - sum(log_std) - m * half_log_two_pi();
}

Var log_beta_fn(Var a, Var b) { return lgamma(a) + lgamma(b) - lgamma(a + b); }

void require_rows(Var states, std::size_t n, const char* who) {
  if (states.rows() != 1 && states.rows() != n) {
    throw ConfigError(std::string(who) + ": states must have 1 or " + std::to_string(n) + " rows");
  }
}

}  // namespace

// ---------------------------------------------------------------- Gaussian

GaussianPolicy::GaussianPolicy(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch, const ActionBox& box,
                               bool tanh_mean)
    : Policy(tanh_mean ? PolicyKind::GaussianTanh : PolicyKind::Gaussian, obs_dim, act_dim, arch, box) {
  mean_net_ = nets::Mlp(
      nets::MlpSpec{obs_dim, act_dim, arch.hidden, tanh_mean ? nets::FinalActivation::Tanh : nets::FinalActivation::None},
      "mean", layout_);
  log_std_ = layout_.add("log_std", 1, act_dim);
}

void GaussianPolicy::init_into(std::span<double> flat, Rng& rng) const {
  mean_net_.init(flat, rng);
  for (std::size_t i = 0; i < log_std_.size(); ++i) flat[log_std_.offset + i] = 0.0;
}

Var GaussianPolicy::mean(Var theta, Var states) const { return mean_net_.forward(theta, shared_states(states)); }

Var GaussianPolicy::log_prob_impl(Var theta, Var states, Var actions) const {
  require_rows(states, actions.rows(), "gaussian log_prob");
  return diag_gaussian_log_density(actions, mean(theta, states), log_std(theta));
}

Draw GaussianPolicy::sample_impl(Var theta, Var states, std::size_t n, Rng& rng) const {
  require_rows(states, n, "gaussian sample");
  Var noise = theta.tape().constant(rng.normal_tensor(n, act_dim()));
  Var actions = mean(theta, states) + exp(log_std(theta)) * noise;
  return {actions, log_prob(theta, states, actions)};
}

std::optional<Var> GaussianPolicy::entropy(Var theta, Var) const {
  const double m = static_cast<double>(act_dim());
  return sum(log_std(theta)) + m * (half_log_two_pi() + 0.5);
}

std::optional<Var> GaussianPolicy::kl(Var old_theta, Var theta, Var states) const {
  Var mu_old = mean(old_theta, states);
  Var ls_old = log_std(old_theta);
  Var mu_new = mean(theta, states);
  Var ls_new = log_std(theta);
  Var per_dim = (exp(2.0 * ls_old) + square(mu_old - mu_new)) * exp(-2.0 * ls_new) * 0.5 + (ls_new - ls_old);
  return row_sum(per_dim) - 0.5 * static_cast<double>(act_dim());
}

// ---------------------------------------------------------------- GMM

GmmPolicy::GmmPolicy(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch, const ActionBox& box)
    : Policy(PolicyKind::Gmm, obs_dim, act_dim, arch, box), components_(arch.gmm_components) {
  if (components_ == 0) throw ConfigError("gmm policy needs at least one component");
  mean_net_ = nets::Mlp(nets::MlpSpec{obs_dim, act_dim * components_, arch.hidden}, "mean", layout_);
  log_std_ = layout_.add("log_std", components_, act_dim);
}

void GmmPolicy::init_into(std::span<double> flat, Rng& rng) const {
  mean_net_.init(flat, rng);
  for (std::size_t i = 0; i < log_std_.size(); ++i) flat[log_std_.offset + i] = 0.0;
}

Var GmmPolicy::component_mean(Var theta, Var shared, std::size_t k) const {
  Var means = mean_net_.forward(theta, shared);
  return slice_cols(means, k * act_dim(), (k + 1) * act_dim());
}

Var GmmPolicy::component_log_std(Var theta, std::size_t k) const {
  return view(theta, log_std_.offset + k * act_dim(), 1, act_dim());
}

Var GmmPolicy::log_prob_impl(Var theta, Var states, Var actions) const {
  require_rows(states, actions.rows(), "gmm log_prob");
  Var means = mean_net_.forward(theta, shared_states(states));
  const std::size_t m = act_dim();
  std::vector<Var> comps;
  comps.reserve(components_);
  for (std::size_t k = 0; k < components_; ++k) {
    comps.push_back(
        diag_gaussian_log_density(actions, slice_cols(means, k * m, (k + 1) * m), component_log_std(theta, k)));
  }
  Var stacked = concat_cols(comps);
  // log-sum-exp with a per-row constant shift.
  const Tensor& lv = stacked.value();
  Tensor shift(lv.rows(), 1);
  Tensor shift_wide(lv.rows(), lv.cols());
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    const auto row = lv.row_span(r);
    shift(r, 0) = *std::max_element(row.begin(), row.end());
    for (std::size_t c = 0; c < lv.cols(); ++c) shift_wide(r, c) = shift(r, 0);
  }
  Tape& tape = theta.tape();
  Var total = log(row_sum(exp(stacked - tape.constant(std::move(shift_wide)))));
  return total + tape.constant(std::move(shift)) - std::log(static_cast<double>(components_));
}

Draw GmmPolicy::sample_impl(Var theta, Var states, std::size_t n, Rng& rng) const {
  require_rows(states, n, "gmm sample");
  const std::size_t m = act_dim();
  std::vector<std::size_t> picks(n);
  for (auto& p : picks) p = rng.index(components_);
  Tape& tape = theta.tape();
  Var noise = tape.constant(rng.normal_tensor(n, m));
  Var shared = shared_states(states);
  Var means = mean_net_.forward(theta, shared);
  Var actions;
  for (std::size_t k = 0; k < components_; ++k) {
    Tensor mask(n, m, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (picks[i] != k) continue;
      any = true;
      for (std::size_t j = 0; j < m; ++j) mask(i, j) = 1.0;
    }
    if (!any) continue;
    Var comp = slice_cols(means, k * m, (k + 1) * m) + exp(component_log_std(theta, k)) * noise;
    Var picked = tape.constant(std::move(mask)) * comp;
    actions = actions.valid() ? actions + picked : picked;
  }
  return {actions, log_prob(theta, states, actions)};
}

// ---------------------------------------------------------------- Beta

BetaPolicy::BetaPolicy(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch, const ActionBox& box)
    : Policy(PolicyKind::Beta, obs_dim, act_dim, arch, box) {
  net_ = nets::Mlp(nets::MlpSpec{obs_dim, 2 * act_dim, arch.hidden, nets::FinalActivation::SoftplusPlusOne},
                   "concentration", layout_);
}

void BetaPolicy::init_into(std::span<double> flat, Rng& rng) const { net_.init(flat, rng); }

double BetaPolicy::log_box_volume() const {
  double v = 0.0;
  for (std::size_t j = 0; j < act_dim(); ++j) v += std::log(box().high[j] - box().low[j]);
  return v;
}

BetaPolicy::Concentrations BetaPolicy::concentrations(Var theta, Var states) const {
  Var out = net_.forward(theta, shared_states(states));
  for (double v : out.value().data()) {
    if (v > kMaxConcentration) {
      throw NumericError("beta policy: concentration overflow (" + std::to_string(v) + ")");
    }
  }
  return {slice_cols(out, 0, act_dim()), slice_cols(out, act_dim(), 2 * act_dim())};
}

Var BetaPolicy::log_prob_impl(Var theta, Var states, Var actions) const {
  require_rows(states, actions.rows(), "beta log_prob");
  const Tensor& a = actions.value();
  const std::size_t m = act_dim();
  Tensor log_x(a.rows(), m);
  Tensor log_1mx(a.rows(), m);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double x = (a(i, j) - box().low[j]) / (box().high[j] - box().low[j]);
      if (x < kBoundaryMargin || x > 1.0 - kBoundaryMargin) {
        x = std::clamp(x, kBoundaryMargin, 1.0 - kBoundaryMargin);
        ++clamped;
      }
      log_x(i, j) = std::log(x);
      log_1mx(i, j) = std::log1p(-x);
    }
  }
  if (clamped > 0) boundary_clamps_ += clamped;
  auto [alpha, beta] = concentrations(theta, states);
  Tape& tape = theta.tape();
  Var kernel = row_sum((alpha - 1.0) * tape.constant(std::move(log_x)) + (beta - 1.0) * tape.constant(std::move(log_1mx)));
  return kernel - row_sum(log_beta_fn(alpha, beta)) - log_box_volume();
}

Draw BetaPolicy::sample_impl(Var theta, Var states, std::size_t n, Rng& rng) const {
  require_rows(states, n, "beta sample");
  auto conc = concentrations(theta, states);
  const Tensor& alpha = conc.alpha.value();
  const Tensor& beta = conc.beta.value();
  const std::size_t m = act_dim();
  Tensor actions(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = alpha.rows() == 1 ? 0 : i;
    for (std::size_t j = 0; j < m; ++j) {
      const double g1 = rng.gamma(alpha(r, j));
      const double g2 = rng.gamma(beta(r, j));
      const double x = g1 / (g1 + g2);
      actions(i, j) = box().low[j] + (box().high[j] - box().low[j]) * x;
    }
  }
  Var a = theta.tape().constant(std::move(actions));
  return {a, log_prob(theta, states, a)};
}

std::optional<Var> BetaPolicy::entropy(Var theta, Var states) const {
  auto [a, b] = concentrations(theta, states);
  Var per_dim = log_beta_fn(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b);
  return row_sum(per_dim) + log_box_volume();
}

std::optional<Var> BetaPolicy::kl(Var old_theta, Var theta, Var states) const {
  auto [a1, b1] = concentrations(old_theta, states);
  auto [a2, b2] = concentrations(theta, states);
  Var per_dim = log_beta_fn(a2, b2) - log_beta_fn(a1, b1) + (a1 - a2) * digamma(a1) + (b1 - b2) * digamma(b1) +
                (a2 - a1 + b2 - b1) * digamma(a1 + b1);
  return row_sum(per_dim);
}

// ---------------------------------------------------------------- Flow

flows::FlowSpec flow_spec_for(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch) {
  flows::FlowSpec spec;
  spec.action_dim = act_dim;
  spec.obs_dim = obs_dim;
  spec.layers = arch.flow_layers;
  spec.conditioner_hidden.assign(arch.flow_depth, arch.flow_hidden);
  spec.state_hidden = arch.state_hidden;
  spec.scale_clamp = arch.scale_clamp;
  spec.inject_after = arch.inject_after;
  return spec;
}

FlowPolicy::FlowPolicy(std::size_t obs_dim, std::size_t act_dim, const PolicyArch& arch, const ActionBox& box)
    : Policy(PolicyKind::Flow, obs_dim, act_dim, arch, box), flow_(flow_spec_for(obs_dim, act_dim, arch), "flow", layout_) {}

void FlowPolicy::init_into(std::span<double> flat, Rng& rng) const { flow_.init(flat, rng); }

Var FlowPolicy::log_prob_impl(Var theta, Var states, Var actions) const {
  require_rows(states, actions.rows(), "flow log_prob");
  return flow_.log_prob(theta, shared_states(states), actions);
}

Draw FlowPolicy::sample_impl(Var theta, Var states, std::size_t n, Rng& rng) const {
  require_rows(states, n, "flow sample");
  Var noise = theta.tape().constant(rng.normal_tensor(n, act_dim()));
  auto s = flow_.sample(theta, shared_states(states), noise);
  return {s.actions, s.log_prob};
}

}  // namespace flowtrpo::policies
