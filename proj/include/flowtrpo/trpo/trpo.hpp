#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowtrpo/envs/env.hpp"
#include "flowtrpo/policies/policy.hpp"

namespace flowtrpo::trpo {

struct TrpoConfig {
  double max_kl = 0.01;
  std::size_t cg_iters = 10;
  double cg_damping = 0.1;
  double cg_tol = 1e-10;
  double hvp_fd_step = 1e-5;
  double backtrack_ratio = 0.5;
  std::size_t max_backtracks = 10;
  double entropy_coef = 0.0;
  /// Reparameterized draws per state for the entropy term.
  std::size_t entropy_samples = 64;
  /// Distinct states used by the entropy term (0 = all).
  std::size_t entropy_states = 16;
  /// Old-policy draws per state for sample-based KL.
  std::size_t kl_samples = 4;
  /// Use every k-th state in Fisher-vector products (1 = all).
  std::size_t fvp_subsample = 1;

  void validate() const;
  friend bool operator==(const TrpoConfig&, const TrpoConfig&) = default;
};

struct UpdateReport {
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double kl_after = 0.0;
  double step_scale = 0.0;
  double cg_residual = 0.0;
  /// g^T H^-1 g, the squared natural-gradient norm.
  double shs = 0.0;
  std::size_t backtracks = 0;
  bool accepted = false;
  /// Non-empty when the update aborted on a numeric error.
  std::string error;
};

/// Seeds for the update's stochastic estimators, fixed across all evaluations
/// inside one update so the line search compares like with like.
struct UpdateSeeds {
  std::uint64_t entropy = 0;
  std::uint64_t kl = 0;
};

/// Everything the surrogate and KL need from a batch.
struct UpdateData {
  Tensor states;
  Tensor actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  static UpdateData from_batch(const envs::TrajectoryBatch& batch);
};

/// mean(exp(logp_new - logp_old) * A) + entropy_coef * H. The entropy estimate
/// is drawn from `entropy_seed`. Throws NumericError if any log-ratio exceeds 30.
Var surrogate(const policies::Policy& policy, Var theta, const UpdateData& data, const TrpoConfig& cfg,
              std::uint64_t entropy_seed);

/// Value of the entropy term used by the surrogate, without the coefficient.
double entropy_estimate(const policies::Policy& policy, std::span<const double> theta, const Tensor& states,
                        const TrpoConfig& cfg, std::uint64_t seed);

/// Mean KL(old || new) over the given states. Kinds with a closed form use it;
/// others use fixed old-policy draws (`samples`).
class KlEstimator {
 public:
  KlEstimator(const policies::Policy& policy, std::span<const double> old_theta, const Tensor& states,
              std::size_t draws_per_state, std::uint64_t seed);
  Var operator()(Var theta) const;
  double value(std::span<const double> theta) const;
  std::vector<double> gradient(std::span<const double> theta) const;
  bool analytic() const { return analytic_; }

 private:
  const policies::Policy& policy_;
  std::vector<double> old_theta_;
  Tensor states_;
  bool analytic_;
  Tensor sample_states_;
  Tensor sample_actions_;
  std::vector<double> sample_old_log_probs_;
};

/// Hv + damping * v, with Hv from central differences of the KL gradient at
/// theta +- delta v, delta = fd_step / |v|.
std::vector<double> fisher_vector_product(const KlEstimator& kl, std::span<const double> theta,
                                          std::span<const double> v, double fd_step, double damping);

struct CgResult {
  std::vector<double> x;
  /// |A x - g| / |g| using the solver's recursive residual.
  double residual = 0.0;
  std::size_t iterations = 0;
};

using MatVec = std::function<std::vector<double>(std::span<const double>)>;

CgResult conjugate_gradient(const MatVec& matvec, std::span<const double> g, std::size_t iters, double tol = 1e-10);

/// Full step s* x with s* = sqrt(2 max_kl / x^T H x), so the quadratic KL model
/// 0.5 step^T H step equals max_kl. `hx` is H x.
std::vector<double> scaled_step(std::span<const double> x, std::span<const double> hx, double max_kl);

struct UpdateResult {
  std::vector<double> theta;
  UpdateReport report;
};

/// One trust-region step. Rejected or failed updates return `theta` unchanged.
UpdateResult trpo_update(const policies::Policy& policy, std::span<const double> theta, const UpdateData& data,
                         const TrpoConfig& cfg, const UpdateSeeds& seeds);

/// Header and row for the per-iteration log.
std::string log_header();
std::string log_line(std::size_t iter, std::size_t timesteps, double mean_return, const UpdateReport& report,
                     double entropy_estimate);

}  // namespace flowtrpo::trpo
