#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flowtrpo/envs/env.hpp"
#include "flowtrpo/envs/value.hpp"
#include "flowtrpo/nets/adam.hpp"
#include "flowtrpo/policies/policy.hpp"
#include "flowtrpo/trpo/trpo.hpp"

namespace flowtrpo::trpo {

/// Everything that determines a training run apart from its length and output location.
struct TrainSettings {
  envs::EnvSpec env;
  policies::PolicyKind policy = policies::PolicyKind::Gaussian;
  policies::PolicyArch arch;
  TrpoConfig trpo;
  std::size_t batch_size = 1000;
  double gamma = 0.99;
  double lambda = 0.97;
  bool normalize_advantages = true;
  std::size_t vf_epochs = 5;
  double vf_step_size = 1e-3;
  std::size_t vf_minibatch = 64;
  std::vector<std::size_t> vf_hidden{64, 64};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainSettings&, const TrainSettings&) = default;
};

/// Mutable state of a run; restoring it reproduces the run bit for bit.
struct TrainerState {
  std::size_t iteration = 0;
  std::size_t timesteps = 0;
  std::vector<double> theta;
  std::vector<double> vf_params;
  nets::Adam vf_adam;
  Rng rollout_rng;
  Rng entropy_rng;
  Rng kl_rng;
  Rng vf_rng;
  /// Mean episode return of every completed iteration.
  std::vector<double> returns;

  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

struct IterationRecord {
  std::size_t iteration = 0;
  std::size_t timesteps = 0;
  double mean_return = 0.0;
  UpdateReport update;
  double entropy = 0.0;
  envs::ValueFitReport vf;

  std::string log_line() const;
};

/// On-policy TRPO loop with a learned baseline. Randomness comes from named
/// substreams of the master seed: init, rollout, entropy-mc, kl-mc, vf.
class Trainer {
 public:
  explicit Trainer(TrainSettings settings);
  Trainer(TrainSettings settings, TrainerState state);

  /// Collect a batch, update the policy, refit the baseline.
  IterationRecord iterate();

  /// Rollout with values and advantages filled in, exactly as `iterate` prepares it.
  envs::TrajectoryBatch prepared_batch(Rng& rng) const;

  /// Mean undiscounted return of `episodes` fresh episodes.
  double evaluate(std::size_t episodes, Rng& rng) const;

  const TrainSettings& settings() const { return settings_; }
  const envs::Env& env() const { return env_; }
  const policies::Policy& policy() const { return *policy_; }
  std::span<const double> theta() const { return state_.theta; }
  const TrainerState& state() const;

 private:
  void restore_value_function();

  TrainSettings settings_;
  envs::Env env_;
  std::unique_ptr<policies::Policy> policy_;
  envs::ValueFunction vf_;
  mutable TrainerState state_;
};

}  // namespace flowtrpo::trpo
