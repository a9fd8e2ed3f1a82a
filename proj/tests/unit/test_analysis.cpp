#include <cmath>
#include <numbers>

#include "doctest.h"
#include "flowtrpo/analysis/analysis.hpp"
#include "flowtrpo/diffcore/errors.hpp"
#include "flowtrpo/policies/kinds.hpp"

using namespace flowtrpo;
using namespace flowtrpo::analysis;

namespace {

/// N(mu, diag(exp(log_std))^2) as a bias-only Gaussian policy at state 0.
Distribution gaussian(double mu0, double mu1, double log_std0, double log_std1) {
  policies::PolicyArch arch;
  arch.hidden = {};
  Distribution d;
  d.policy = std::make_unique<policies::GaussianPolicy>(1, 2, arch, policies::ActionBox::symmetric(2, 1.0), false);
  d.theta.assign(d.policy->layout().total(), 0.0);
  const auto b = *d.policy->layout().find("mean/b0");
  const auto ls = *d.policy->layout().find("log_std");
  d.theta[b.offset] = mu0;
  d.theta[b.offset + 1] = mu1;
  d.theta[ls.offset] = log_std0;
  d.theta[ls.offset + 1] = log_std1;
  d.state = Tensor(1, 1, 0.0);
  return d;
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("sample statistics match hand-computed values") {
    Tensor x(4, 2, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 9});
    auto s = sample_stats(x);
    CHECK(s.mean[0] == doctest::Approx(4.0));
    CHECK(s.mean[1] == doctest::Approx(5.25));
    // Unbiased: sum of squared deviations / 3.
    CHECK(s.covariance[0] == doctest::Approx(20.0 / 3.0));
    CHECK(s.covariance[3] == doctest::Approx(26.75 / 3.0));
    CHECK(s.covariance[1] == doctest::Approx(23.0 / 3.0));
    CHECK(s.covariance[1] == s.covariance[2]);
    CHECK(s.correlation() == doctest::Approx(23.0 / std::sqrt(20.0 * 26.75)));
    CHECK_THROWS_AS(sample_stats(Tensor(1, 2)), ConfigError);
  }

  TEST_CASE("support radius is the 95% quantile of norms") {
    Tensor x(100, 2, 0.0);
    for (std::size_t i = 0; i < 100; ++i) x(i, 1) = static_cast<double>(i + 1);
    CHECK(support_radius(x) == 95.0);
  }

  TEST_CASE("standard normal grid is symmetric and integrates to one") {
    auto d = gaussian(0.0, 0.0, 0.0, 0.0);
    auto g = density_grid(d, -8.0, 8.0, 161);
    const std::size_t n = g.xs.size();
    double worst = 0.0;
    for (std::size_t iy = 0; iy < n; ++iy) {
      for (std::size_t ix = 0; ix < n; ++ix) {
        const double a = g.logp[iy * n + ix];
        worst = std::max(worst, std::abs(a - g.logp[(n - 1 - iy) * n + (n - 1 - ix)]));
        worst = std::max(worst, std::abs(a - g.logp[iy * n + (n - 1 - ix)]));
      }
    }
    CHECK(worst < 1e-12);
    CHECK(g.logp[80 * n + 80] == doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
    CHECK(integrate(g) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_THROWS_AS(density_grid(d, 1.0, -1.0, 10), ConfigError);
  }

  TEST_CASE("grid of a random flow integrates to about one") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      Distribution d;
      policies::PolicyArch arch;
      arch.flow_layers = 4;
      d.policy = std::make_unique<policies::FlowPolicy>(1, 2, arch, policies::ActionBox::symmetric(2, 1.0));
      Rng rng(seed);
      d.theta = d.policy->init(rng).values;
      d.state = Tensor(1, 1, 0.0);
      // Wide window: random initial stacks can carry heavy tails.
      CHECK(integrate(density_grid(d, -30.0, 30.0, 1201)) == doctest::Approx(1.0).epsilon(1e-2));
    }
  }

  TEST_CASE("corr-bandit max-ent target peaks at the origin") {
    envs::Env env{envs::EnvSpec{}};
    std::size_t best = 0;
    double best_r = -1e300;
    const std::size_t n = 41;
    for (std::size_t i = 0; i < n * n; ++i) {
      const double a[2] = {-2.0 + 0.1 * static_cast<double>(i % n), -2.0 + 0.1 * static_cast<double>(i / n)};
      const double r = env.bandit_reward(a);
      if (r > best_r) {
        best_r = r;
        best = i;
      }
    }
    CHECK(best == 20 * n + 20);
  }

  TEST_CASE("max-ent target covariance matches quadrature of exp(r/c)") {
    envs::EnvSpec spec;
    envs::Env env{spec};
    for (double c : {0.5, 1.0, 2.0}) {
      // Riemann moments of exp(r(a)/c) on a fine grid.
      const double h = 0.02, lim = 6.0;
      double z = 0, sxx = 0, sxy = 0, syy = 0;
      for (double x = -lim; x <= lim; x += h) {
        for (double y = -lim; y <= lim; y += h) {
          const double a[2] = {x, y};
          const double w = std::exp(env.bandit_reward(a) / c);
          z += w;
          sxx += w * x * x;
          sxy += w * x * y;
          syy += w * y * y;
        }
      }
      auto target = maxent_target_covariance(spec, c);
      CHECK(target[0] == doctest::Approx(sxx / z).epsilon(1e-4));
      CHECK(target[1] == doctest::Approx(sxy / z).epsilon(1e-4));
      CHECK(target[3] == doctest::Approx(syy / z).epsilon(1e-4));
    }
  }

  TEST_CASE("reference KL: zero for the generating Gaussian, per-point oracle otherwise") {
    const double sigma = 0.1;
    Rng rng(5);
    Tensor ref = rng.normal_tensor(2000, 2);
    for (double& v : ref.data()) v *= sigma;
    CHECK(std::abs(kl_to_reference(gaussian(0, 0, std::log(sigma), std::log(sigma)), ref, sigma)) < 1e-12);

    const double s0 = 0.13, s1 = 0.2, m0 = 0.05;
    auto cand = gaussian(m0, 0.0, std::log(s0), std::log(s1));
    double oracle = 0.0;
    auto log_n = [](double x, double m, double s) {
      return -0.5 * std::log(2 * std::numbers::pi * s * s) - (x - m) * (x - m) / (2 * s * s);
    };
    for (std::size_t r = 0; r < ref.rows(); ++r) {
      oracle += log_n(ref(r, 0), 0, sigma) + log_n(ref(r, 1), 0, sigma) - log_n(ref(r, 0), m0, s0) -
                log_n(ref(r, 1), 0, s1);
    }
    oracle /= static_cast<double>(ref.rows());
    CHECK(kl_to_reference(cand, ref, sigma) == doctest::Approx(oracle).epsilon(1e-12));
  }

  TEST_CASE("mode masses use the nearest mode") {
    Tensor x(5, 2, std::vector<double>{-1, 0, -0.2, 3, 0.1, 0, 2, 2, 0.6, -1});
    auto m = mode_masses(x, {{-0.7, 0.0}, {0.7, 0.0}});
    CHECK(m[0] == doctest::Approx(0.4));
    CHECK(m[1] == doctest::Approx(0.6));
  }

  TEST_CASE("gaussian boundary fit lands on the KL boundary with moderately larger variance") {
    KlBallSpec spec;
    spec.kind = policies::PolicyKind::Gaussian;
    spec.report_samples = 20000;
    auto res = fit_to_kl_boundary(spec, 3);
    CHECK(res.report.converged);
    CHECK(std::abs(res.report.final_kl - spec.epsilon) < spec.tolerance * spec.epsilon);
    for (double v : res.report.sample_variance) {
      CHECK(v > spec.sigma * spec.sigma);
      CHECK(v < 1.5 * spec.sigma * spec.sigma);
    }
    CHECK(res.report.effective_support_radius > 0.0);
    CHECK(res.reference.rows() == spec.n_ref);
  }

  TEST_CASE("boundary fit reports failure when the budget is exhausted") {
    KlBallSpec spec;
    spec.kind = policies::PolicyKind::Gaussian;
    spec.explore_steps = 10;
    spec.max_steps = 20;
    spec.report_samples = 100;
    auto res = fit_to_kl_boundary(spec, 0);
    CHECK_FALSE(res.report.converged);
    CHECK(res.report.steps == 20);
    CHECK_FALSE(res.report.message.empty());
    CHECK_FALSE(res.report.trace.empty());
  }

  TEST_CASE("max-ent fit reports the fields of its bandit") {
    MaxentSpec spec;
    spec.kind = policies::PolicyKind::Gaussian;
    spec.iterations = 3;
    spec.batch_size = 64;
    spec.report_samples = 500;
    auto corr = maxent_bandit_fit(spec);
    CHECK(corr.report.iterations == 3);
    CHECK(corr.report.target_covariance.size() == 4);
    CHECK(corr.report.mode_mass.empty());
    CHECK(corr.samples.rows() == 500);
    spec.env.kind = envs::EnvKind::BimodalBandit;
    auto bi = maxent_bandit_fit(spec);
    CHECK(bi.report.mode_mass.size() == 2);
    CHECK(bi.report.mode_mass[0] + bi.report.mode_mass[1] == doctest::Approx(1.0));
    spec.env.kind = envs::EnvKind::PointMass;
    CHECK_THROWS_AS(maxent_bandit_fit(spec), ConfigError);
  }
}
