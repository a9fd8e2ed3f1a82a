#include "flowtrpo/flows/flow_stack.hpp"

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::flows {

namespace {

template <typename F>
CouplingLayer::Output guarded(std::size_t index, F&& step) {
  try {
    return step();
  } catch (const NumericError& e) {
    throw NumericError("coupling layer " + std::to_string(index) + ": " + e.what());
  }
}

}  // namespace

void FlowSpec::validate() const {
  if (action_dim == 0) throw ConfigError("flow: action_dim must be positive");
  if (obs_dim == 0) throw ConfigError("flow: obs_dim must be positive");
  if (layers == 0) throw ConfigError("flow: at least one coupling layer is required");
  if (inject_after > layers) throw ConfigError("flow: inject_after exceeds the number of layers");
}

FlowStack::FlowStack(FlowSpec spec, const std::string& prefix, ParamLayout& layout) : spec_(std::move(spec)) {
  spec_.validate();
  layers_.reserve(spec_.layers);
  for (std::size_t i = 0; i < spec_.layers; ++i) {
    layers_.emplace_back(spec_.action_dim, spec_.conditioner_hidden, spec_.scale_clamp,
                         prefix + "/coupling" + std::to_string(i), layout);
  }
  state_net_ = nets::Mlp(nets::MlpSpec{spec_.obs_dim, spec_.action_dim, spec_.state_hidden}, prefix + "/state", layout);
}

Var FlowStack::embed(Var theta, Var states) const { return state_net_.forward(theta, states); }

FlowStack::Pass FlowStack::push_forward(Var theta, Var states, Var noise) const {
  if (noise.cols() != spec_.action_dim) throw ConfigError("flow: noise width does not match action_dim");
  if (states.rows() != 1 && states.rows() != noise.rows()) throw ConfigError("flow: state/noise row mismatch");
  Var embedding = embed(theta, states);
  Pass pass;
  Var h = noise;
  if (spec_.inject_after == 0) h = h + embedding;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i > 0) h = reverse_cols(h);
    auto out = guarded(i, [&] { return layers_[i].forward(theta, h); });
    h = out.value;
    pass.layer_logdets.push_back(out.logdet);
    pass.logdet = i == 0 ? out.logdet : pass.logdet + out.logdet;
    if (i + 1 == spec_.inject_after) h = h + embedding;
  }
  pass.value = h;
  return pass;
}

FlowStack::Pass FlowStack::pull_back(Var theta, Var states, Var actions) const {
  if (actions.cols() != spec_.action_dim) throw ConfigError("flow: action width does not match action_dim");
  if (states.rows() != 1 && states.rows() != actions.rows()) throw ConfigError("flow: state/action row mismatch");
  Var embedding = embed(theta, states);
  Pass pass;
  pass.layer_logdets.resize(layers_.size());
  Var h = actions;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 == spec_.inject_after) h = h - embedding;
    auto out = guarded(i, [&] { return layers_[i].inverse(theta, h); });
    h = out.value;
    pass.layer_logdets[i] = out.logdet;
    pass.logdet = pass.logdet.valid() ? pass.logdet + out.logdet : out.logdet;
    if (i > 0) h = reverse_cols(h);
  }
  if (spec_.inject_after == 0) h = h - embedding;
  pass.value = h;
  return pass;
}

FlowStack::Sample FlowStack::sample(Var theta, Var states, Var noise) const {
  auto pass = push_forward(theta, states, noise);
  return {pass.value, standard_normal_log_density(noise) - pass.logdet};
}

Var FlowStack::log_prob(Var theta, Var states, Var actions) const {
  auto pass = pull_back(theta, states, actions);
  return standard_normal_log_density(pass.value) - pass.logdet;
}

void FlowStack::init(std::span<double> flat, Rng& rng) const {
  for (const auto& layer : layers_) layer.init(flat, rng);
  state_net_.init(flat, rng);
}

}  // namespace flowtrpo::flows
