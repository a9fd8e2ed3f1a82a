#include "flowtrpo/envs/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <Eigen/Dense>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::envs {

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::CorrBandit: return "corr-bandit";
    case EnvKind::BimodalBandit: return "bimodal-bandit";
    case EnvKind::PointMass: return "point-mass";
  }
  return "?";
}

EnvKind parse_env_kind(std::string_view name) {
  if (name == "corr-bandit") return EnvKind::CorrBandit;
  if (name == "bimodal-bandit") return EnvKind::BimodalBandit;
  if (name == "point-mass") return EnvKind::PointMass;
  throw ConfigError("unknown env kind '" + std::string(name) + "'");
}

Env::Env(EnvSpec spec) : spec_(std::move(spec)) {
  switch (spec_.kind) {
    case EnvKind::CorrBandit: {
      const auto n = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(spec_.sigma.size()))));
      if (n == 0 || n * n != spec_.sigma.size()) throw ConfigError("env.sigma must be a non-empty square matrix");
      Eigen::MatrixXd sigma(n, n);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) sigma(r, c) = spec_.sigma[r * n + c];
      }
      if (!sigma.isApprox(sigma.transpose())) throw ConfigError("env.sigma must be symmetric");
      Eigen::LLT<Eigen::MatrixXd> llt(sigma);
      if (llt.info() != Eigen::Success) throw ConfigError("env.sigma must be positive definite");
      Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
      sigma_inv_.resize(n * n);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) sigma_inv_[r * n + c] = inv(r, c);
      }
      act_dim_ = n;
      obs_dim_ = 1;
      break;
    }
    case EnvKind::BimodalBandit: {
      if (spec_.modes.empty() || spec_.modes[0].empty()) throw ConfigError("env.modes must list at least one mode");
      for (const auto& m : spec_.modes) {
        if (m.size() != spec_.modes[0].size()) throw ConfigError("env.modes entries must share one dimension");
      }
      if (!(spec_.mode_scale > 0.0)) throw ConfigError("env.mode_scale must be positive");
      act_dim_ = spec_.modes[0].size();
      obs_dim_ = 1;
      break;
    }
    case EnvKind::PointMass:
      if (spec_.pm_dim == 0) throw ConfigError("env.pm_dim must be positive");
      if (spec_.horizon == 0) throw ConfigError("env.horizon must be positive");
      if (!(spec_.action_bound > 0.0)) throw ConfigError("env.action_bound must be positive");
      act_dim_ = spec_.pm_dim;
      obs_dim_ = spec_.pm_dim;
      break;
  }
  box_ = policies::ActionBox::symmetric(act_dim_, is_bandit() ? spec_.bandit_bound : spec_.action_bound);
}

Tensor Env::reset(Rng& rng) const {
  Tensor s(1, obs_dim_, 0.0);
  if (!is_bandit()) {
    for (double& v : s.data()) v = rng.uniform(-spec_.start_bound, spec_.start_bound);
  }
  return s;
}

double Env::bandit_reward(std::span<const double> a) const {
  const std::size_t n = act_dim_;
  if (a.size() != n) throw ConfigError("bandit action has the wrong dimension");
  if (spec_.kind == EnvKind::CorrBandit) {
    double q = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) q += a[r] * sigma_inv_[r * n + c] * a[c];
    }
    return -q;
  }
  if (spec_.kind == EnvKind::BimodalBandit) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& mu : spec_.modes) {
      double q = 0.0;
      for (std::size_t j = 0; j < n; ++j) q += (a[j] - mu[j]) * (a[j] - mu[j]);
      best = std::max(best, -q / spec_.mode_scale);
    }
    return best;
  }
  throw ContractError("bandit_reward called on a point-mass env");
}

StepResult Env::step(const Tensor& state, std::span<const double> action, std::size_t t, Rng& rng) const {
  if (action.size() != act_dim_) throw ConfigError("action has the wrong dimension");
  StepResult out;
  if (is_bandit()) {
    // Bandits score the raw action; the box only bounds boxed policies.
    for (std::size_t j = 0; j < act_dim_; ++j) {
      if (action[j] < box_.low[j] || action[j] > box_.high[j]) out.clipped = true;
    }
    out.next_state = state;
    out.reward = bandit_reward(action);
    out.done = true;
    return out;
  }
  out.next_state = Tensor(1, obs_dim_);
  double norm2 = 0.0, cost = 0.0;
  for (std::size_t j = 0; j < act_dim_; ++j) {
    double a = action[j];
    if (a < box_.low[j] || a > box_.high[j]) {
      a = std::clamp(a, box_.low[j], box_.high[j]);
      out.clipped = true;
    }
    const double s = state(0, j) + spec_.action_gain * a + spec_.noise_scale * rng.normal();
    out.next_state(0, j) = s;
    norm2 += s * s;
    cost += a * a;
  }
  const double dist = std::sqrt(norm2);
  out.reward = -dist - spec_.action_cost * cost;
  out.done = t + 1 >= spec_.horizon || dist > spec_.escape_radius;
  return out;
}

ActionRule uniform_random_rule(const Env& env) {
  const policies::ActionBox box = env.box();
  return [box](const Tensor&, Rng& rng) {
    std::vector<double> a(box.low.size());
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = rng.uniform(box.low[j], box.high[j]);
    return a;
  };
}

ActionRule proportional_rule(const Env& env, double gain) {
  if (env.is_bandit()) throw ConfigError("proportional_rule needs a point-mass env");
  const policies::ActionBox box = env.box();
  return [box, gain](const Tensor& s, Rng&) {
    std::vector<double> a(box.low.size());
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = std::clamp(-gain * s(0, j), box.low[j], box.high[j]);
    return a;
  };
}

double mean_rule_return(const Env& env, const ActionRule& rule, std::size_t episodes, Rng& rng) {
  if (episodes == 0) throw ConfigError("mean_rule_return needs at least one episode");
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    Tensor s = env.reset(rng);
    for (std::size_t t = 0;; ++t) {
      const auto a = rule(s, rng);
      auto res = env.step(s, a, t, rng);
      total += res.reward;
      if (res.done) break;
      s = std::move(res.next_state);
    }
  }
  return total / static_cast<double>(episodes);
}

double TrajectoryBatch::mean_episode_return() const {
  if (episode_returns.empty()) return 0.0;
  double s = 0.0;
  for (double r : episode_returns) s += r;
  return s / static_cast<double>(episode_returns.size());
}

TrajectoryBatch collect(const Env& env, const policies::Policy& policy, std::span<const double> theta,
                        std::size_t n_steps, Rng& rng) {
  if (n_steps == 0) throw ConfigError("collect needs n_steps >= 1");
  const std::size_t obs = env.obs_dim(), act = env.act_dim();
  std::vector<double> state_store, action_store;
  TrajectoryBatch batch;

  if (env.is_bandit()) {
    // Every episode is one step from the same constant observation.
    const Tensor s0 = env.reset(rng);
    auto draw = policies::sample_actions(policy, theta, s0, n_steps, rng);
    for (std::size_t i = 0; i < n_steps; ++i) {
      auto a = draw.actions.row_span(i);
      auto res = env.step(s0, a, 0, rng);
      state_store.insert(state_store.end(), s0.data().begin(), s0.data().end());
      action_store.insert(action_store.end(), a.begin(), a.end());
      batch.rewards.push_back(res.reward);
      batch.old_log_probs.push_back(draw.log_probs[i]);
      batch.dones.push_back(1);
      batch.episode.push_back(i);
      batch.step.push_back(0);
      batch.episode_returns.push_back(res.reward);
      batch.clipped_actions += res.clipped ? 1 : 0;
    }
  } else {
    // Waves of episodes advance in lock-step so each step is one policy call.
    std::size_t gathered = 0;
    while (gathered < n_steps) {
      const std::size_t wave = (n_steps - gathered + env.horizon() - 1) / env.horizon();
      struct Track {
        Tensor state;
        bool live = true;
        double ret = 0.0;
        std::vector<double> s, a, r, lp;
        std::vector<char> d;
      };
      std::vector<Track> tracks(wave);
      for (auto& tr : tracks) tr.state = env.reset(rng);
      for (std::size_t t = 0; t < env.horizon(); ++t) {
        std::vector<std::size_t> live;
        for (std::size_t e = 0; e < wave; ++e) {
          if (tracks[e].live) live.push_back(e);
        }
        if (live.empty()) break;
        std::vector<double> rows;
        rows.reserve(live.size() * obs);
        for (std::size_t e : live) rows.insert(rows.end(), tracks[e].state.data().begin(), tracks[e].state.data().end());
        const Tensor states(live.size(), obs, std::move(rows));
        auto draw = policies::sample_actions(policy, theta, states, live.size(), rng);
        for (std::size_t k = 0; k < live.size(); ++k) {
          Track& tr = tracks[live[k]];
          auto a = draw.actions.row_span(k);
          auto res = env.step(tr.state, a, t, rng);
          tr.s.insert(tr.s.end(), tr.state.data().begin(), tr.state.data().end());
          tr.a.insert(tr.a.end(), a.begin(), a.end());
          tr.r.push_back(res.reward);
          tr.lp.push_back(draw.log_probs[k]);
          tr.d.push_back(res.done ? 1 : 0);
          tr.ret += res.reward;
          batch.clipped_actions += res.clipped ? 1 : 0;
          tr.state = res.next_state;
          if (res.done) tr.live = false;
        }
      }
      for (auto& tr : tracks) {
        const std::size_t id = batch.episode_returns.size();
        for (std::size_t t = 0; t < tr.r.size(); ++t) {
          batch.episode.push_back(id);
          batch.step.push_back(t);
        }
        state_store.insert(state_store.end(), tr.s.begin(), tr.s.end());
        action_store.insert(action_store.end(), tr.a.begin(), tr.a.end());
        batch.rewards.insert(batch.rewards.end(), tr.r.begin(), tr.r.end());
        batch.old_log_probs.insert(batch.old_log_probs.end(), tr.lp.begin(), tr.lp.end());
        batch.dones.insert(batch.dones.end(), tr.d.begin(), tr.d.end());
        batch.episode_returns.push_back(tr.ret);
        gathered += tr.r.size();
      }
    }
  }
  const std::size_t n = batch.rewards.size();
  batch.states = Tensor(n, obs, std::move(state_store));
  batch.actions = Tensor(n, act, std::move(action_store));
  batch.values.assign(n, 0.0);
  batch.advantages.assign(n, 0.0);
  batch.returns.assign(n, 0.0);
  return batch;
}

void gae_advantages(TrajectoryBatch& batch, std::span<const double> values, double gamma, double lambda) {
  const std::size_t n = batch.size();
  if (values.size() != n) throw ConfigError("gae: one value per timestep is required");
  batch.values.assign(values.begin(), values.end());
  batch.advantages.assign(n, 0.0);
  batch.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const bool last_of_episode = i + 1 == n || batch.episode[i + 1] != batch.episode[i];
    if (last_of_episode) {
      if (!batch.dones[i]) throw ContractError("gae: episode ends without a terminal flag");
      running = 0.0;
    }
    const double next_v = (last_of_episode || batch.dones[i]) ? 0.0 : values[i + 1];
    const double delta = batch.rewards[i] + gamma * next_v - values[i];
    running = delta + gamma * lambda * (batch.dones[i] ? 0.0 : running);
    batch.advantages[i] = running;
    batch.returns[i] = running + values[i];
  }
}

void normalize_advantages(TrajectoryBatch& batch) {
  const std::size_t n = batch.advantages.size();
  if (n == 0) return;
  double mean = 0.0;
  for (double a : batch.advantages) mean += a;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double a : batch.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (double& a : batch.advantages) a = (a - mean) / (sd + 1e-8);
}

}  // namespace flowtrpo::envs
