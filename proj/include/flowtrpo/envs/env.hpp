#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "flowtrpo/diffcore/rng.hpp"
#include "flowtrpo/diffcore/tensor.hpp"
#include "flowtrpo/policies/policy.hpp"

namespace flowtrpo::envs {

enum class EnvKind { CorrBandit, BimodalBandit, PointMass };

std::string to_string(EnvKind kind);
/// Accepts "corr-bandit", "bimodal-bandit", "point-mass".
EnvKind parse_env_kind(std::string_view name);

struct EnvSpec {
  EnvKind kind = EnvKind::CorrBandit;

  /// corr-bandit: row-major Sigma of r(a) = -a^T Sigma^{-1} a.
  std::vector<double> sigma{1.0, 0.8, 0.8, 1.0};

  /// bimodal-bandit: r(a) = max_i -(a - mu_i)^T Lambda^{-1} (a - mu_i), Lambda = mode_scale * I.
  std::vector<std::vector<double>> modes{{-0.7, 0.0}, {0.7, 0.0}};
  double mode_scale = 0.05;

  /// Half-width of the symmetric bandit action box (used by boxed policies only).
  double bandit_bound = 4.0;

  /// point-mass: s' = s + gain * a + noise * xi; r = -|s'| - cost * |a|^2.
  std::size_t pm_dim = 2;
  std::size_t horizon = 100;
  double action_gain = 0.1;
  double noise_scale = 0.01;
  double action_cost = 0.01;
  double escape_radius = 10.0;
  double start_bound = 1.0;
  double action_bound = 1.0;

  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

struct StepResult {
  Tensor next_state;  // 1 x obs_dim
  double reward = 0.0;
  bool done = false;
  /// The action left the box and was clipped before the dynamics used it.
  bool clipped = false;
};

/// Desk-scale environment. Bandits have horizon 1 and a constant zero observation.
class Env {
 public:
  explicit Env(EnvSpec spec);

  const EnvSpec& spec() const { return spec_; }
  EnvKind kind() const { return spec_.kind; }
  bool is_bandit() const { return spec_.kind != EnvKind::PointMass; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t act_dim() const { return act_dim_; }
  std::size_t horizon() const { return is_bandit() ? 1 : spec_.horizon; }
  const policies::ActionBox& box() const { return box_; }

  Tensor reset(Rng& rng) const;
  /// `t` is the index of this step within its episode.
  StepResult step(const Tensor& state, std::span<const double> action, std::size_t t, Rng& rng) const;

  /// Bandit reward for an action; throws ContractError on point-mass.
  double bandit_reward(std::span<const double> action) const;

 private:
  EnvSpec spec_;
  std::size_t obs_dim_ = 0;
  std::size_t act_dim_ = 0;
  policies::ActionBox box_;
  std::vector<double> sigma_inv_;
};

/// Fixed state-feedback rule used as a reference policy; may draw from `rng`.
using ActionRule = std::function<std::vector<double>(const Tensor& state, Rng& rng)>;

/// Uniform over the action box.
ActionRule uniform_random_rule(const Env& env);
/// a = clip(-gain * s) on point-mass.
ActionRule proportional_rule(const Env& env, double gain);
/// Mean undiscounted return of `episodes` episodes under `rule`.
double mean_rule_return(const Env& env, const ActionRule& rule, std::size_t episodes, Rng& rng);

/// One iteration's worth of experience. Rows are grouped by episode in order.
struct TrajectoryBatch {
  Tensor states;
  Tensor actions;
  std::vector<double> rewards;
  std::vector<double> old_log_probs;
  std::vector<char> dones;
  std::vector<std::size_t> episode;
  std::vector<std::size_t> step;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;
  /// Undiscounted return of each completed episode.
  std::vector<double> episode_returns;
  std::size_t clipped_actions = 0;

  std::size_t size() const { return rewards.size(); }
  std::size_t episodes() const { return episode_returns.size(); }
  double mean_episode_return() const;
};

/// Runs whole episodes until at least `n_steps` timesteps are gathered.
/// Old log-probabilities are cached at collection time.
TrajectoryBatch collect(const Env& env, const policies::Policy& policy, std::span<const double> theta,
                        std::size_t n_steps, Rng& rng);

/// Fills advantages and returns. `values` must hold V(s_t) for every row.
/// Episodes in a batch always end with done, so no bootstrap is required.
void gae_advantages(TrajectoryBatch& batch, std::span<const double> values, double gamma, double lambda);

/// Rescales advantages to zero mean and unit standard deviation.
void normalize_advantages(TrajectoryBatch& batch);

}  // namespace flowtrpo::envs
