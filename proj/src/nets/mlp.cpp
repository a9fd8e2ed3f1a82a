#include "flowtrpo/nets/mlp.hpp"

#include <cmath>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::nets {

std::size_t MlpSpec::param_count() const {
  std::size_t count = 0;
  std::size_t fan_in = input_dim;
  for (std::size_t width : hidden) {
    count += (fan_in + 1) * width;
    fan_in = width;
  }
  return count + (fan_in + 1) * output_dim;
}

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("mlp: input and output dims must be positive");
  for (std::size_t width : hidden) {
    if (width == 0) throw ConfigError("mlp: hidden layer of width 0");
  }
}

Mlp::Mlp(MlpSpec spec, const std::string& prefix, ParamLayout& layout) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t fan_in = spec_.input_dim;
  std::vector<std::size_t> widths = spec_.hidden;
  widths.push_back(spec_.output_dim);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const auto idx = std::to_string(i);
    Layer layer;
    layer.weight = layout.add(prefix + "/W" + idx, fan_in, widths[i]);
    layer.bias = layout.add(prefix + "/b" + idx, 1, widths[i]);
    layers_.push_back(layer);
    fan_in = widths[i];
  }
}

Var Mlp::pre_activation(Var theta, Var x) const {
  if (x.cols() != spec_.input_dim) {
    throw ConfigError("mlp: input has " + std::to_string(x.cols()) + " columns, expected " +
                      std::to_string(spec_.input_dim));
  }
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = matmul(h, slot_view(theta, layers_[i].weight)) + slot_view(theta, layers_[i].bias);
    if (i + 1 < layers_.size()) h = tanh(h);
  }
  return h;
}

Var Mlp::forward(Var theta, Var x) const {
  Var out = pre_activation(theta, x);
  switch (spec_.final_activation) {
    case FinalActivation::None:
      return out;
    case FinalActivation::Tanh:
      return tanh(out);
    case FinalActivation::SoftplusPlusOne:
      return softplus(out) + 1.0;
  }
  return out;
}

void Mlp::init(std::span<double> flat, Rng& rng) const {
  for (const Layer& layer : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.rows + layer.weight.cols));
    for (std::size_t i = 0; i < layer.weight.size(); ++i) flat[layer.weight.offset + i] = rng.uniform(-limit, limit);
    for (std::size_t i = 0; i < layer.bias.size(); ++i) flat[layer.bias.offset + i] = 0.0;
  }
}

void Mlp::scale_output_layer(std::span<double> flat, double factor) const {
  const ParamSlot& w = layers_.back().weight;
  for (std::size_t i = 0; i < w.size(); ++i) flat[w.offset + i] *= factor;
}

Tensor evaluate(const Mlp& net, std::span<const double> theta, const Tensor& x) {
  Tape tape;
  Var t = tape.constant(Tensor::row(theta));
  return net.forward(t, tape.constant(x)).value();
}

}  // namespace flowtrpo::nets
