#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flowtrpo/diffcore/flat_params.hpp"
#include "flowtrpo/diffcore/rng.hpp"
#include "flowtrpo/diffcore/tape.hpp"

namespace flowtrpo::nets {

enum class FinalActivation {
  None,
  Tanh,
  /// softplus(x) + 1, keeps Beta concentrations above one.
  SoftplusPlusOne,
};

/// Fully connected tanh network. An empty `hidden` list is a bare affine map.
struct MlpSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::vector<std::size_t> hidden;
  FinalActivation final_activation = FinalActivation::None;

  /// Sum over layers of (fan_in + 1) * fan_out.
  std::size_t param_count() const;
  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// An MLP whose weights live in a shared flat parameter vector under `prefix`.
class Mlp {
 public:
  Mlp() = default;
  /// Registers "<prefix>/W<i>" (fan_in x fan_out) and "<prefix>/b<i>" (1 x fan_out) blocks.
  Mlp(MlpSpec spec, const std::string& prefix, ParamLayout& layout);

  const MlpSpec& spec() const { return spec_; }

  /// x is N x input_dim; returns N x output_dim after the final activation.
  Var forward(Var theta, Var x) const;
  /// Same as forward but stops before the final activation.
  Var pre_activation(Var theta, Var x) const;

  /// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases, written into `flat`.
  void init(std::span<double> flat, Rng& rng) const;
  /// Multiplies the last layer's weights by `factor` (used for near-identity starts).
  void scale_output_layer(std::span<double> flat, double factor) const;

 private:
  struct Layer {
    ParamSlot weight;
    ParamSlot bias;
  };
  MlpSpec spec_;
  std::vector<Layer> layers_;
};

/// Evaluates `net` on x outside of any training graph.
Tensor evaluate(const Mlp& net, std::span<const double> theta, const Tensor& x);

}  // namespace flowtrpo::nets
