#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "flowtrpo/envs/env.hpp"
#include "flowtrpo/policies/policy.hpp"
#include "flowtrpo/trpo/trainer.hpp"

namespace flowtrpo::analysis {

/// A state-free 2-D distribution: a policy evaluated at one fixed state.
struct Distribution {
  std::unique_ptr<policies::Policy> policy;
  std::vector<double> theta;
  Tensor state;

  std::vector<double> log_prob(const Tensor& points) const;
  Tensor sample(std::size_t n, Rng& rng) const;
};

struct SampleStats {
  std::vector<double> mean;
  /// Row-major covariance (unbiased).
  std::vector<double> covariance;
  std::vector<double> variance() const;
  double correlation(std::size_t i = 0, std::size_t j = 1) const;
};

SampleStats sample_stats(const Tensor& samples);

/// 95% quantile of the row norms.
double support_radius(const Tensor& samples);

struct Grid {
  std::vector<double> xs;
  std::vector<double> ys;
  /// logp[iy * xs.size() + ix]
  std::vector<double> logp;
};

/// Log-density on a regular resolution x resolution grid over [lo, hi]^2.
Grid density_grid(const Distribution& dist, double lo, double hi, std::size_t resolution);

/// Trapezoid-rule integral of exp(logp).
double integrate(const Grid& grid);

struct KlBallSpec {
  double sigma = 0.1;
  std::size_t n_ref = 10000;
  double epsilon = 0.01;
  policies::PolicyKind kind = policies::PolicyKind::Flow;
  /// K = 4 coupling layers with two 8-unit conditioner layers.
  policies::PolicyArch arch = [] {
    policies::PolicyArch a;
    a.flow_hidden = 8;
    a.flow_depth = 2;
    return a;
  }();
  /// Weight of the -log(sample variance) pressure. It is held for
  /// `explore_steps`, then multiplied by `beta_decay` every step.
  double beta = 0.1;
  std::size_t explore_steps = 1000;
  double beta_decay = 0.995;
  /// Reference points per gradient step (0 = all).
  std::size_t batch = 500;
  /// Full-reference KL is evaluated every `check_every` steps.
  std::size_t check_every = 10;
  std::size_t max_steps = 10000;
  double step_size = 3e-3;
  /// Reparameterized draws per step for the variance term.
  std::size_t variance_samples = 512;
  /// Draws enter the variance term as c*tanh(a/c) with c = spread_clip*sigma.
  double spread_clip = 5.0;
  std::size_t report_samples = 100000;
  /// Converged once |KL - epsilon| < tolerance * epsilon.
  double tolerance = 0.1;
};

struct FitReport {
  bool converged = false;
  std::size_t steps = 0;
  double final_kl = 0.0;
  std::vector<double> sample_variance;
  double effective_support_radius = 0.0;
  /// (step, KL) every 100 steps.
  std::vector<std::pair<std::size_t, double>> trace;
  std::string message;
};

struct KlBallResult {
  Distribution fitted;
  Tensor reference;
  FitReport report;
};

/// Fits a candidate onto the boundary of {pi : KL(p_ref || pi) <= epsilon}, with
/// p_ref = N(0, sigma^2 I) represented by n_ref samples.
KlBallResult fit_to_kl_boundary(const KlBallSpec& spec, std::uint64_t seed);

/// Mean over reference points of log p_ref(a) - log pi(a).
double kl_to_reference(const Distribution& dist, const Tensor& reference, double sigma);

struct MaxentSpec {
  envs::EnvSpec env;
  policies::PolicyKind kind = policies::PolicyKind::Flow;
  /// K = 4 coupling layers with two 8-unit conditioner layers.
  policies::PolicyArch arch = [] {
    policies::PolicyArch a;
    a.flow_hidden = 8;
    a.flow_depth = 2;
    return a;
  }();
  double temperature = 1.0;
  std::size_t iterations = 500;
  std::size_t batch_size = 256;
  trpo::TrpoConfig trpo;
  std::size_t report_samples = 100000;
  std::uint64_t seed = 0;
};

struct MaxentReport {
  std::size_t iterations = 0;
  std::size_t accepted_updates = 0;
  double final_return = 0.0;
  std::vector<double> mean;
  std::vector<double> covariance;
  double correlation = 0.0;
  /// Corr-bandit only: covariance of the max-ent optimum and the Frobenius
  /// distance of the sample covariance from it.
  std::vector<double> target_covariance;
  double covariance_error = 0.0;
  /// Bimodal only: fraction of samples in each mode's basin (nearest mode).
  std::vector<double> mode_mass;
};

struct MaxentResult {
  std::unique_ptr<trpo::Trainer> trainer;
  Tensor samples;
  MaxentReport report;
};

/// The trainer's current policy at the zero observation.
Distribution distribution_of(const trpo::Trainer& trainer);

/// Covariance c * Sigma / 2 of the optimum pi* proportional to exp(r/c) for r = -a^T Sigma^-1 a.
std::vector<double> maxent_target_covariance(const envs::EnvSpec& env, double temperature);

/// Fraction of rows nearest to each mode.
std::vector<double> mode_masses(const Tensor& samples, const std::vector<std::vector<double>>& modes);

/// Max-entropy TRPO (entropy_coef = c, no advantage normalization) on a bandit.
MaxentResult maxent_bandit_fit(const MaxentSpec& spec);

/// Writes "x,y" rows.
void write_samples_csv(std::ostream& out, const Tensor& samples);
/// Writes "x,y,logp" rows.
void write_grid_csv(std::ostream& out, const Grid& grid);
std::string to_json(const FitReport& report);
std::string to_json(const MaxentReport& report);

}  // namespace flowtrpo::analysis
