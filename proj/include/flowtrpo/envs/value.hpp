#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "flowtrpo/diffcore/flat_params.hpp"
#include "flowtrpo/envs/env.hpp"
#include "flowtrpo/nets/adam.hpp"
#include "flowtrpo/nets/mlp.hpp"

namespace flowtrpo::envs {

/// State-value critic: tanh MLP with a scalar output, trained by Adam on squared error.
class ValueFunction {
 public:
  explicit ValueFunction(std::size_t obs_dim, std::vector<std::size_t> hidden = {64, 64});

  const ParamLayout& layout() const { return layout_; }
  const nets::Mlp& net() const { return net_; }
  void init(Rng& rng);

  std::vector<double> predict(const Tensor& states) const;

  std::vector<double> params;
  nets::Adam adam;

 private:
  ParamLayout layout_;
  nets::Mlp net_;
};

struct ValueFitReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  bool reverted = false;
};

/// Minibatch Adam on mean squared error against `batch.returns`. A final loss
/// above 10x the initial one restores the previous parameters.
ValueFitReport fit_value(ValueFunction& vf, const TrajectoryBatch& batch, std::size_t epochs, double step_size,
                         Rng& rng, std::size_t minibatch = 64);

/// CSV with columns episode,t,s0..,a0..,r,logp,V,A,return.
void write_batch_csv(std::ostream& out, const TrajectoryBatch& batch);

}  // namespace flowtrpo::envs
