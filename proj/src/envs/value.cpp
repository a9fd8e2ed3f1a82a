#include "flowtrpo/envs/value.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::envs {

ValueFunction::ValueFunction(std::size_t obs_dim, std::vector<std::size_t> hidden)
    : net_(nets::MlpSpec{obs_dim, 1, std::move(hidden)}, "vf", layout_) {
  params.assign(layout_.total(), 0.0);
}

void ValueFunction::init(Rng& rng) {
  params.assign(layout_.total(), 0.0);
  net_.init(params, rng);
  adam = nets::Adam{};
}

std::vector<double> ValueFunction::predict(const Tensor& states) const {
  return nets::evaluate(net_, params, states).storage();
}

namespace {

double mse(const ValueFunction& vf, const TrajectoryBatch& batch) {
  auto pred = vf.predict(batch.states);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - batch.returns[i]) * (pred[i] - batch.returns[i]);
  return s / static_cast<double>(pred.size());
}

}  // namespace

ValueFitReport fit_value(ValueFunction& vf, const TrajectoryBatch& batch, std::size_t epochs, double step_size,
                         Rng& rng, std::size_t minibatch) {
  const std::size_t n = batch.size();
  if (n == 0) throw ConfigError("fit_value: empty batch");
  if (minibatch == 0) throw ConfigError("fit_value: minibatch must be positive");
  ValueFitReport report;
  report.initial_loss = mse(vf, batch);
  report.final_loss = report.initial_loss;
  if (epochs == 0) return report;

  const auto saved_params = vf.params;
  const auto saved_adam = vf.adam;
  vf.adam.step_size = step_size;
  std::vector<std::size_t> order(n);
  const std::size_t obs = batch.states.cols();
  try {
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
      for (std::size_t start = 0; start < n; start += minibatch) {
        const std::size_t len = std::min(minibatch, n - start);
        Tensor x(len, obs), y(len, 1);
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t row = order[start + k];
          for (std::size_t c = 0; c < obs; ++c) x(k, c) = batch.states(row, c);
          y(k, 0) = batch.returns[row];
        }
        Tape tape;
        Var theta = tape.leaf(Tensor::row(vf.params));
        Var loss = mean(square(vf.net().forward(theta, tape.constant(std::move(x))) - tape.constant(std::move(y))));
        vf.adam.step(vf.params, tape.gradient(loss, theta));
      }
    }
    report.final_loss = mse(vf, batch);
  } catch (const NumericError&) {
    report.final_loss = std::numeric_limits<double>::infinity();
  }
  if (!(report.final_loss <= 10.0 * report.initial_loss)) {
    vf.params = saved_params;
    vf.adam = saved_adam;
    report.reverted = true;
  }
  return report;
}

void write_batch_csv(std::ostream& out, const TrajectoryBatch& batch) {
  const std::size_t obs = batch.states.cols(), act = batch.actions.cols();
  out << "episode,t";
  for (std::size_t j = 0; j < obs; ++j) out << ",s" << j;
  for (std::size_t j = 0; j < act; ++j) out << ",a" << j;
  out << ",r,logp,V,A,return\n";
  out.precision(17);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out << batch.episode[i] << ',' << batch.step[i];
    for (std::size_t j = 0; j < obs; ++j) out << ',' << batch.states(i, j);
    for (std::size_t j = 0; j < act; ++j) out << ',' << batch.actions(i, j);
    out << ',' << batch.rewards[i] << ',' << batch.old_log_probs[i] << ',' << batch.values[i] << ','
        << batch.advantages[i] << ',' << batch.returns[i] << '\n';
  }
}

}  // namespace flowtrpo::envs
