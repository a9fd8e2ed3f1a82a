#include "flowtrpo/trpo/trainer.hpp"

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::trpo {

void TrainSettings::validate() const {
  trpo.validate();
  if (batch_size == 0) throw ConfigError("run.batch_size must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("run.gamma must be in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("run.lambda must be in [0, 1]");
  if (vf_minibatch == 0) throw ConfigError("vf.minibatch must be positive");
  if (!(vf_step_size > 0.0)) throw ConfigError("vf.step_size must be positive");
  if (arch.gmm_components == 0) throw ConfigError("policy.gmm_components must be positive");
  if (arch.flow_layers == 0) throw ConfigError("policy.flow_layers must be positive");
}

std::string IterationRecord::log_line() const {
  return trpo::log_line(iteration, timesteps, mean_return, update, entropy);
}

namespace {

TrainerState fresh_state(const TrainSettings& s) {
  TrainerState st;
  st.rollout_rng = Rng::substream(s.seed, "rollout");
  st.entropy_rng = Rng::substream(s.seed, "entropy-mc");
  st.kl_rng = Rng::substream(s.seed, "kl-mc");
  st.vf_rng = Rng::substream(s.seed, "vf");
  return st;
}

}  // namespace

Trainer::Trainer(TrainSettings settings)
    : Trainer(settings, fresh_state(settings)) {
  Rng init = Rng::substream(settings_.seed, "init");
  state_.theta = policy_->init(init).values;
  vf_.init(init);
}

Trainer::Trainer(TrainSettings settings, TrainerState state)
    : settings_(std::move(settings)),
      env_((settings_.validate(), settings_.env)),
      policy_(policies::make_policy(settings_.policy, env_.obs_dim(), env_.act_dim(), settings_.arch, env_.box())),
      vf_(env_.obs_dim(), settings_.vf_hidden),
      state_(std::move(state)) {
  if (!state_.theta.empty()) {
    if (state_.theta.size() != policy_->layout().total())
      throw ConfigError("checkpoint policy parameters do not match the configured architecture");
    restore_value_function();
  }
}

void Trainer::restore_value_function() {
  if (state_.vf_params.size() != vf_.layout().total())
    throw ConfigError("checkpoint value-function parameters do not match the configured architecture");
  vf_.params = state_.vf_params;
  vf_.adam = state_.vf_adam;
}

const TrainerState& Trainer::state() const {
  state_.vf_params = vf_.params;
  state_.vf_adam = vf_.adam;
  return state_;
}

envs::TrajectoryBatch Trainer::prepared_batch(Rng& rng) const {
  auto batch = envs::collect(env_, *policy_, state_.theta, settings_.batch_size, rng);
  const auto values = vf_.predict(batch.states);
  envs::gae_advantages(batch, values, settings_.gamma, settings_.lambda);
  if (settings_.normalize_advantages) envs::normalize_advantages(batch);
  return batch;
}

IterationRecord Trainer::iterate() {
  auto batch = prepared_batch(state_.rollout_rng);
  const UpdateSeeds seeds{state_.entropy_rng.next_u64(), state_.kl_rng.next_u64()};
  auto result = trpo_update(*policy_, state_.theta, UpdateData::from_batch(batch), settings_.trpo, seeds);
  state_.theta = std::move(result.theta);

  IterationRecord rec;
  rec.update = std::move(result.report);
  rec.entropy = entropy_estimate(*policy_, state_.theta, batch.states, settings_.trpo, seeds.entropy);
  rec.vf = envs::fit_value(vf_, batch, settings_.vf_epochs, settings_.vf_step_size, state_.vf_rng,
                           settings_.vf_minibatch);
  state_.iteration += 1;
  state_.timesteps += batch.size();
  rec.iteration = state_.iteration;
  rec.timesteps = state_.timesteps;
  rec.mean_return = batch.mean_episode_return();
  state_.returns.push_back(rec.mean_return);
  return rec;
}

double Trainer::evaluate(std::size_t episodes, Rng& rng) const {
  if (episodes == 0) throw ConfigError("evaluate: episode count must be positive");
  double total = 0.0;
  std::size_t done = 0;
  while (done < episodes) {
    auto batch = envs::collect(env_, *policy_, state_.theta, (episodes - done) * env_.horizon(), rng);
    for (double r : batch.episode_returns) {
      if (done == episodes) break;
      total += r;
      ++done;
    }
  }
  return total / static_cast<double>(episodes);
}

}  // namespace flowtrpo::trpo
