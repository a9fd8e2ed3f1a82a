// Acceptance suite. `acceptance` runs every criterion; `acceptance 3 5` runs a
// subset. One PASS/FAIL line per criterion; the exit code is non-zero on any FAIL.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "flowtrpo/analysis/analysis.hpp"
#include "flowtrpo/cli/run.hpp"
#include "flowtrpo/flows/flow_stack.hpp"
#include "flowtrpo/policies/estimators.hpp"
#include "flowtrpo/policies/kinds.hpp"
#include "flowtrpo/trpo/trainer.hpp"
#include "oracles.hpp"

using namespace flowtrpo;
namespace ft = flowtrpo::testing;
namespace fs = std::filesystem;
using policies::PolicyKind;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("flowtrpo_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Stand-alone flow stack with randomized conditioner weights and biases.
struct RandomStack {
  ParamLayout layout;
  flows::FlowStack stack;
  std::vector<double> theta;

  RandomStack(std::size_t dim, std::size_t layers, std::size_t obs_dim, Rng& rng)
      : stack(make_spec(dim, layers, obs_dim), "flow", layout), theta(layout.total(), 0.0) {
    stack.init(theta, rng);
    for (const auto& slot : layout.slots()) {
      if (slot.name.find("/b") == std::string::npos) continue;
      for (std::size_t i = 0; i < slot.size(); ++i) theta[slot.offset + i] = 0.3 * rng.normal();
    }
  }

  static flows::FlowSpec make_spec(std::size_t dim, std::size_t layers, std::size_t obs_dim) {
    flows::FlowSpec s;
    s.action_dim = dim;
    s.obs_dim = obs_dim;
    s.layers = layers;
    s.conditioner_hidden = {3, 3, 3};
    s.state_hidden = {8};
    return s;
  }

  std::vector<double> log_prob(const Tensor& state, const Tensor& actions) const {
    Tape tape;
    Tensor lp = stack.log_prob(tape.constant(Tensor::row(theta)), tape.constant(state), tape.constant(actions)).value();
    return {lp.data().begin(), lp.data().end()};
  }
};

// 1. Density correctness of random 2-D stacks.
Outcome flow_density() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  const Tensor state = Tensor::scalar(0.5);
  bool ok = true;
  std::string detail;
  for (std::size_t layers : {2, 4}) {
    RandomStack f(2, layers, 1, rng);

    // Trapezoid integral over [-8, 8]^2.
    const std::size_t n = 321;
    const double lo = -8.0, h = 16.0 / static_cast<double>(n - 1);
    Tensor grid(n * n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        grid(i * n + j, 0) = lo + h * static_cast<double>(i);
        grid(i * n + j, 1) = lo + h * static_cast<double>(j);
      }
    }
    const auto lp = f.log_prob(state, grid);
    double integral = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double w = ((i == 0 || i == n - 1) ? 0.5 : 1.0) * ((j == 0 || j == n - 1) ? 0.5 : 1.0);
        integral += w * std::exp(lp[i * n + j]);
      }
    }
    integral *= h * h;

    // 10^6 samples binned on a 50 x 50 grid spanning the central 99% per axis.
    const std::size_t total = 1000000, chunk = 100000, bins = 50;
    Tensor samples(total, 2);
    for (std::size_t start = 0; start < total; start += chunk) {
      Tape tape;
      auto s = f.stack.sample(tape.constant(Tensor::row(f.theta)), tape.constant(state),
                              tape.constant(rng.normal_tensor(chunk, 2)));
      const Tensor& a = s.actions.value();
      std::copy(a.data().begin(), a.data().end(), samples.data().begin() + static_cast<std::ptrdiff_t>(start * 2));
    }
    double lim[2][2];
    for (std::size_t d = 0; d < 2; ++d) {
      std::vector<double> col(total);
      for (std::size_t r = 0; r < total; ++r) col[r] = samples(r, d);
      std::sort(col.begin(), col.end());
      lim[d][0] = col[total / 200];
      lim[d][1] = col[total - 1 - total / 200];
    }
    const double wx = (lim[0][1] - lim[0][0]) / bins, wy = (lim[1][1] - lim[1][0]) / bins;
    std::vector<double> counts(bins * bins, 0.0);
    for (std::size_t r = 0; r < total; ++r) {
      const double bx = std::floor((samples(r, 0) - lim[0][0]) / wx), by = std::floor((samples(r, 1) - lim[1][0]) / wy);
      if (bx < 0 || by < 0 || bx >= bins || by >= bins) continue;
      counts[static_cast<std::size_t>(bx) * bins + static_cast<std::size_t>(by)] += 1.0;
    }
    // Cell probabilities by 5 x 5 Gauss-Legendre quadrature of exp(log_prob).
    const auto& gl = ft::gauss_legendre5();
    Tensor nodes(bins * bins * 25, 2);
    for (std::size_t c = 0; c < bins * bins; ++c) {
      const double cx = lim[0][0] + (static_cast<double>(c / bins) + 0.5) * wx;
      const double cy = lim[1][0] + (static_cast<double>(c % bins) + 0.5) * wy;
      for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t b = 0; b < 5; ++b) {
          nodes(c * 25 + a * 5 + b, 0) = cx + 0.5 * wx * gl[a].first;
          nodes(c * 25 + a * 5 + b, 1) = cy + 0.5 * wy * gl[b].first;
        }
      }
    }
    const auto node_lp = f.log_prob(state, nodes);
    std::size_t good = 0;
    for (std::size_t c = 0; c < bins * bins; ++c) {
      double p = 0.0;
      for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t b = 0; b < 5; ++b) p += gl[a].second * gl[b].second * std::exp(node_lp[c * 25 + a * 5 + b]);
      }
      p *= 0.25 * wx * wy;
      const double expected = static_cast<double>(total) * p;
      const double se = std::sqrt(static_cast<double>(total) * p * (1.0 - p));
      if (std::abs(counts[c] - expected) <= 3.0 * se) ++good;
    }
    const double frac = static_cast<double>(good) / static_cast<double>(bins * bins);
    ok = ok && integral >= 0.99 && integral <= 1.01 && frac >= 0.95;
    detail += fmt("K=%zu integral=%.5f cells_within_3se=%.4f; ", layers, integral, frac);
  }
  const double t = seconds_since(t0);
  ok = ok && t < 120.0;
  return {ok, detail + fmt("%.1fs (limit 120s)", t)};
}

// 2. Round trips through a K = 6 stack.
Outcome invertibility() {
  Rng rng(202);
  double worst = 0.0;
  for (std::size_t dim : {2, 3}) {
    RandomStack f(dim, 6, 2, rng);
    const std::size_t n = 10000;
    Tensor states = rng.normal_tensor(n, 2);
    Tape tape;
    Var theta = tape.constant(Tensor::row(f.theta));
    Var s = tape.constant(states);
    Tensor noise = rng.normal_tensor(n, dim);
    Tensor back = f.stack.pull_back(theta, s, f.stack.push_forward(theta, s, tape.constant(noise)).value).value.value();
    Tensor actions = rng.normal_tensor(n, dim);
    for (double& v : actions.data()) v *= 2.0;
    Tensor again = f.stack.push_forward(theta, s, f.stack.pull_back(theta, s, tape.constant(actions)).value).value.value();
    for (std::size_t i = 0; i < noise.size(); ++i) {
      worst = std::max(worst, std::abs(back.data()[i] - noise.data()[i]));
      worst = std::max(worst, std::abs(again.data()[i] - actions.data()[i]));
    }
  }
  return {worst < 1e-9, fmt("2x10^4 round trips per dim (m=2,3), max inf-norm error %.3e (limit 1e-9)", worst)};
}

policies::PolicyArch small_arch() {
  policies::PolicyArch arch;
  arch.hidden = {8};
  arch.state_hidden = {8};
  return arch;
}

std::vector<double> random_theta(const policies::Policy& p, Rng& rng) {
  auto theta = p.init(rng).values;
  for (auto& v : theta) v += 0.1 * rng.normal();
  return theta;
}

std::vector<double> gradient_of(const std::function<Var(Tape&, Var)>& f, std::span<const double> theta) {
  Tape tape;
  Var leaf = tape.leaf(Tensor::row(theta));
  return tape.gradient(f(tape, leaf), leaf);
}

double value_of(const std::function<Var(Tape&, Var)>& f, std::span<const double> theta) {
  Tape tape;
  return f(tape, tape.constant(Tensor::row(theta))).value().item();
}

/// Worst relative error between the tape gradient and central differences.
double fd_check(const std::function<Var(Tape&, Var)>& f, const std::vector<double>& theta, std::size_t& checked) {
  auto g = gradient_of(f, theta);
  auto fd = ft::richardson_diff([&](std::span<const double> p) { return value_of(f, p); }, theta);
  auto c = ft::compare_gradients(g, fd);
  checked += c.checked;
  return c.max_rel;
}

// 3. Gradients of the composite estimators against finite differences.
Outcome gradients() {
  Rng rng(303);
  const std::vector<PolicyKind> all{PolicyKind::Gaussian, PolicyKind::GaussianTanh, PolicyKind::Gmm, PolicyKind::Beta,
                                    PolicyKind::Flow};
  const std::vector<PolicyKind> reparam{PolicyKind::Gaussian, PolicyKind::GaussianTanh, PolicyKind::Gmm,
                                        PolicyKind::Flow};
  double worst[4] = {0, 0, 0, 0};
  std::size_t checked[4] = {0, 0, 0, 0};
  const auto box = policies::ActionBox::symmetric(2, 1.0);
  for (std::size_t point = 0; point < 20; ++point) {
    {  // surrogate with an entropy bonus
      auto policy = policies::make_policy(all[point % all.size()], 2, 2, small_arch(), box);
      auto old_theta = random_theta(*policy, rng);
      trpo::UpdateData data;
      data.states = rng.normal_tensor(16, 2);
      auto draw = policies::sample_actions(*policy, old_theta, data.states, 16, rng);
      data.actions = draw.actions;
      data.old_log_probs = draw.log_probs;
      for (int i = 0; i < 16; ++i) data.advantages.push_back(rng.normal());
      auto theta = old_theta;
      for (auto& v : theta) v += 0.05 * rng.normal();
      trpo::TrpoConfig cfg;
      cfg.entropy_coef = 0.3;
      cfg.entropy_samples = 8;
      cfg.entropy_states = 4;
      const std::uint64_t seed = rng.next_u64();
      worst[0] = std::max(worst[0], fd_check([&](Tape&, Var t) { return trpo::surrogate(*policy, t, data, cfg, seed); },
                                             theta, checked[0]));
    }
    {  // flow log-prob
      RandomStack f(2, 4, 2, rng);
      const Tensor states = rng.normal_tensor(4, 2), actions = rng.normal_tensor(4, 2);
      worst[1] = std::max(worst[1], fd_check([&](Tape& tape, Var t) {
                            return sum(f.stack.log_prob(t, tape.constant(states), tape.constant(actions)));
                          },
                                             f.theta, checked[1]));
    }
    {  // entropy_mc under common random numbers
      auto policy = policies::make_policy(reparam[point % reparam.size()], 2, 2, small_arch(), box);
      auto theta = random_theta(*policy, rng);
      const Tensor states = rng.normal_tensor(3, 2);
      const Rng stream = rng;
      rng.next_u64();
      worst[2] = std::max(worst[2], fd_check([&](Tape& tape, Var t) {
                            Rng r = stream;
                            return policies::entropy_mc(*policy, t, tape.constant(states), 8, r).value;
                          },
                                             theta, checked[2]));
    }
    {  // kl_mc at a perturbed point
      auto policy = policies::make_policy(all[point % all.size()], 2, 2, small_arch(), box);
      auto old_theta = random_theta(*policy, rng);
      auto theta = old_theta;
      for (auto& v : theta) v += 0.05 * rng.normal();
      const Tensor states = rng.normal_tensor(4, 2);
      const Rng stream = rng;
      rng.next_u64();
      worst[3] = std::max(worst[3], fd_check([&](Tape& tape, Var t) {
                            Rng r = stream;
                            return policies::kl_mc(*policy, old_theta, t, tape.constant(states), 4, r);
                          },
                                             theta, checked[3]));
    }
  }
  bool ok = true;
  for (int i = 0; i < 4; ++i) ok = ok && worst[i] < 1e-5 && checked[i] > 0;
  return {ok, fmt("max rel error: surrogate %.2e, flow log_prob %.2e, entropy_mc %.2e, kl_mc %.2e (limit 1e-5)",
                  worst[0], worst[1], worst[2], worst[3])};
}

trpo::TrainSettings point_mass_settings(PolicyKind kind, std::uint64_t seed) {
  trpo::TrainSettings s;
  s.env.kind = envs::EnvKind::PointMass;
  s.policy = kind;
  s.arch.hidden = {32, 32};
  s.arch.state_hidden = {32, 32};
  s.vf_hidden = {32, 32};
  s.batch_size = 1000;
  s.trpo.fvp_subsample = 5;
  s.seed = seed;
  return s;
}

// 4. CG, Fisher-vector products and trust-region compliance over a run.
Outcome trpo_mechanics() {
  Rng rng(404);
  double cg_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd a(8, 8);
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) a(i, j) = rng.normal();
    }
    const Eigen::MatrixXd spd = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(8, 8);
    Eigen::VectorXd g(8);
    for (int i = 0; i < 8; ++i) g(i) = rng.normal();
    const Eigen::VectorXd direct = spd.ldlt().solve(g);
    auto mv = [&](std::span<const double> v) {
      Eigen::VectorXd out = spd * Eigen::Map<const Eigen::VectorXd>(v.data(), 8);
      return std::vector<double>(out.data(), out.data() + 8);
    };
    auto res = trpo::conjugate_gradient(mv, std::vector<double>(g.data(), g.data() + 8), 8, 0.0);
    for (int i = 0; i < 8; ++i) cg_err = std::max(cg_err, std::abs(res.x[i] - direct(i)) / direct.cwiseAbs().maxCoeff());
  }

  // Bias-only Gaussian at state 0: Fisher is 1/sigma^2 on the mean bias, 2 on log-std.
  policies::PolicyArch arch;
  arch.hidden = {};
  policies::GaussianPolicy gp(1, 3, arch, policies::ActionBox::symmetric(3, 1.0), false);
  auto theta = gp.init(rng).values;
  const auto ls = *gp.layout().find("log_std");
  const auto bias = *gp.layout().find("mean/b0");
  const double log_sigma[3] = {-0.5, 0.2, 0.7};
  for (std::size_t j = 0; j < 3; ++j) theta[ls.offset + j] = log_sigma[j];
  trpo::KlEstimator kl(gp, theta, Tensor(1, 1, 0.0), 1, 0);
  std::vector<double> v(theta.size());
  for (auto& x : v) x = rng.normal();
  const auto hv = trpo::fisher_vector_product(kl, theta, v, 1e-5, 0.0);
  double fisher_err = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    fisher_err = std::max(fisher_err, ft::rel_error(hv[bias.offset + j], v[bias.offset + j] / std::exp(2 * log_sigma[j])));
    fisher_err = std::max(fisher_err, ft::rel_error(hv[ls.offset + j], 2.0 * v[ls.offset + j]));
  }

  // 200-iteration flow run on point-mass. Each accepted update is re-checked
  // with a fresh 16-draw KL sample on the update's batch.
  auto settings = point_mass_settings(PolicyKind::Flow, 4);
  settings.batch_size = 500;
  trpo::Trainer trainer(settings);
  const double eps = settings.trpo.max_kl;
  std::size_t accepted = 0, kl_violations = 0, surrogate_violations = 0;
  double worst_kl = 0.0;
  Rng check_rng(405);
  for (int it = 0; it < 200; ++it) {
    Rng replay = trainer.state().rollout_rng;
    const Tensor states = trainer.prepared_batch(replay).states;
    const std::vector<double> before(trainer.theta().begin(), trainer.theta().end());
    const auto rec = trainer.iterate();
    if (!rec.update.accepted) continue;
    ++accepted;
    Tape tape;
    const double fresh = policies::kl_mc(trainer.policy(), before, tape.constant(Tensor::row(trainer.theta())),
                                         tape.constant(states), 16, check_rng)
                             .value()
                             .item();
    const double reported = rec.update.kl_after;
    worst_kl = std::max({worst_kl, fresh, reported});
    if (fresh > 1.5 * eps || reported > 1.5 * eps) ++kl_violations;
    if (rec.update.surrogate_after - rec.update.surrogate_before < 0.0) ++surrogate_violations;
  }
  const bool ok = cg_err < 1e-8 && fisher_err < 1e-3 && accepted > 0 && kl_violations == 0 && surrogate_violations == 0;
  return {ok, fmt("cg max rel err %.2e; fisher rel err %.2e; point-mass: %zu/200 accepted, max sample KL %.5f "
                  "(limit %.3f), KL violations %zu, surrogate decreases %zu",
                  cg_err, fisher_err, accepted, worst_kl, 1.5 * eps, kl_violations, surrogate_violations)};
}

// 5. KL-ball boundary: flow versus Gaussian spread.
Outcome kl_ball() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> flow_var, gauss_var;
  std::size_t bad_fits = 0;
  double worst_residual = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (auto kind : {PolicyKind::Flow, PolicyKind::Gaussian}) {
      analysis::KlBallSpec spec;
      spec.kind = kind;
      const auto res = analysis::fit_to_kl_boundary(spec, seed);
      const double residual = std::abs(res.report.final_kl - 0.01);
      worst_residual = std::max(worst_residual, residual);
      if (!res.report.converged || residual >= 0.001) ++bad_fits;
      auto& dst = kind == PolicyKind::Flow ? flow_var : gauss_var;
      dst.insert(dst.end(), res.report.sample_variance.begin(), res.report.sample_variance.end());
    }
  }
  const double ratio = median(flow_var) / median(gauss_var);
  const double t = seconds_since(t0);
  const bool ok = ratio > 1.0 && bad_fits == 0 && t < 600.0;
  return {ok, fmt("median variance flow %.5f gaussian %.5f ratio %.3f (need > 1); fits off the boundary %zu, "
                  "max |KL-0.01| %.5f (limit 0.001); %.0fs (limit 600s)",
                  median(flow_var), median(gauss_var), ratio, bad_fits, worst_residual, t)};
}

// 6. Max-entropy fit on the correlated bandit.
Outcome maxent_corr() {
  const auto t0 = std::chrono::steady_clock::now();
  analysis::MaxentSpec spec;
  spec.kind = PolicyKind::Flow;
  const auto flow = analysis::maxent_bandit_fit(spec).report;
  spec.kind = PolicyKind::Gaussian;
  const auto gauss = analysis::maxent_bandit_fit(spec).report;
  const double t = seconds_since(t0);
  const bool ok = flow.correlation >= 0.6 && flow.correlation <= 0.95 && std::abs(gauss.correlation) < 0.1 && t < 900.0;
  return {ok, fmt("flow correlation %.3f (need [0.6, 0.95]); gaussian correlation %.3f (need |.| < 0.1); "
                  "flow covariance %.3f %.3f %.3f vs optimum %.3f %.3f %.3f, Frobenius error %.3f; %.0fs (limit 900s)",
                  flow.correlation, gauss.correlation, flow.covariance[0], flow.covariance[1], flow.covariance[3],
                  flow.target_covariance[0], flow.target_covariance[1], flow.target_covariance[3], flow.covariance_error,
                  t)};
}

// 7. Bimodal bandit: mode coverage versus collapse.
Outcome maxent_bimodal() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t flow_cover = 0, gauss_collapse = 0;
  std::string masses;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    analysis::MaxentSpec spec;
    spec.env.kind = envs::EnvKind::BimodalBandit;
    spec.seed = seed;
    spec.kind = PolicyKind::Flow;
    const auto flow = analysis::maxent_bandit_fit(spec).report;
    spec.kind = PolicyKind::Gaussian;
    const auto gauss = analysis::maxent_bandit_fit(spec).report;
    if (std::min(flow.mode_mass[0], flow.mode_mass[1]) >= 0.2) ++flow_cover;
    if (std::max(gauss.mode_mass[0], gauss.mode_mass[1]) >= 0.95) ++gauss_collapse;
    masses += fmt(" s%d flow %.2f/%.2f gauss %.2f/%.2f;", static_cast<int>(seed), flow.mode_mass[0], flow.mode_mass[1],
                  gauss.mode_mass[0], gauss.mode_mass[1]);
  }
  const double t = seconds_since(t0);
  const bool ok = flow_cover >= 4 && gauss_collapse >= 4 && t < 900.0;
  return {ok, fmt("flow covers both modes in %zu/5 seeds (need >= 4); gaussian collapses in %zu/5;", flow_cover,
                  gauss_collapse) +
                  masses + fmt(" %.0fs (limit 900s)", t)};
}

// 8. Point-mass learning for every policy kind.
Outcome point_mass_learning() {
  const std::size_t iterations = 300, window = 5;
  envs::Env env(point_mass_settings(PolicyKind::Gaussian, 0).env);
  Rng ref_rng(808);
  const double random_return = envs::mean_rule_return(env, envs::uniform_random_rule(env), 500, ref_rng);
  const double controller_return = envs::mean_rule_return(env, envs::proportional_rule(env, 10.0), 500, ref_rng);
  const double target = random_return + 0.5 * (controller_return - random_return);
  bool ok = true;
  std::string detail = fmt("random %.2f controller %.2f target %.2f;", random_return, controller_return, target);
  std::vector<double> finals[5];
  const PolicyKind kinds[5] = {PolicyKind::Gaussian, PolicyKind::GaussianTanh, PolicyKind::Gmm, PolicyKind::Beta,
                               PolicyKind::Flow};
  for (std::size_t k = 0; k < 5; ++k) {
    std::size_t reached = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      trpo::Trainer trainer(point_mass_settings(kinds[k], seed));
      for (std::size_t i = 0; i < iterations; ++i) trainer.iterate();
      const auto& r = trainer.state().returns;
      const double final_return = mean_of(std::vector<double>(r.end() - window, r.end()));
      finals[k].push_back(final_return);
      if (final_return >= target) ++reached;
    }
    ok = ok && reached == 5;
    detail += fmt(" %s %.2f+-%.2f (%zu/5 reach);", policies::to_string(kinds[k]).c_str(), mean_of(finals[k]),
                  std_of(finals[k]), reached);
  }
  // Flow is no worse than Gaussian when the one-std bands overlap.
  const bool overlap = mean_of(finals[4]) + std_of(finals[4]) >= mean_of(finals[0]) - std_of(finals[0]);
  ok = ok && overlap;
  return {ok, detail + fmt(" flow vs gaussian bands overlap: %s; %zu iterations", overlap ? "yes" : "no", iterations)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9. Determinism and checkpoint persistence.
Outcome determinism() {
  cli::RunConfig cfg;
  cfg.train = point_mass_settings(PolicyKind::Flow, 9);
  cfg.train.batch_size = 400;
  cfg.total_timesteps = 2000;
  cfg.checkpoint_every = 2;
  const auto d1 = scratch("det_a"), d2 = scratch("det_b");
  cfg.output_dir = d1.string();
  cli::run_train(cfg);
  cfg.output_dir = d2.string();
  cli::run_train(cfg);
  const bool logs_equal = slurp(d1 / "log.csv") == slurp(d2 / "log.csv") && !slurp(d1 / "log.csv").empty();

  // Reload a checkpoint and compare the next update bit for bit.
  trpo::Trainer live(cfg.train);
  live.iterate();
  live.iterate();
  const auto ckpt = cli::parse_checkpoint(cli::checkpoint_json(cfg, live.state()));
  trpo::Trainer reloaded(ckpt.config.train, ckpt.state);
  const auto a = live.iterate(), b = reloaded.iterate();
  const bool same_update = a.log_line() == b.log_line() && live.state() == reloaded.state();
  return {logs_equal && same_update, fmt("identical logs: %s; reloaded next update bitwise identical: %s",
                                         logs_equal ? "yes" : "no", same_update ? "yes" : "no")};
}

// 10. K x l1 ablation grid on the correlated bandit.
Outcome ablation() {
  cli::RunConfig base;
  base.train.env.kind = envs::EnvKind::CorrBandit;
  base.train.policy = PolicyKind::Flow;
  base.train.trpo.entropy_coef = 1.0;
  base.train.normalize_advantages = false;
  base.train.batch_size = 256;
  base.total_timesteps = 256 * 200;
  base.checkpoint_every = 0;
  const auto root = scratch("ablation");
  const auto res = cli::run_ablation(base, {2, 4, 6}, {3, 5, 7}, {0}, root);
  std::size_t ok_cells = 0;
  std::string cells;
  for (const auto& r : res.rows) {
    if (r.status == "ok") ++ok_cells;
    cells += fmt(" K%zu/l%zu %.3f", r.layers, r.hidden, r.final_return);
  }
  const bool ok = ok_cells == 9 && res.spread < 0.3;
  return {ok, fmt("%zu/9 cells completed, spread %.3f (limit 0.30);", ok_cells, res.spread) + cells};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "flow density correctness", flow_density},
    {2, "flow invertibility", invertibility},
    {3, "gradient correctness", gradients},
    {4, "trpo mechanics", trpo_mechanics},
    {5, "kl-ball boundary spread", kl_ball},
    {6, "max-ent correlated bandit", maxent_corr},
    {7, "max-ent bimodal bandit", maxent_bimodal},
    {8, "point-mass learning", point_mass_learning},
    {9, "determinism and persistence", determinism},
    {10, "ablation grid", ablation},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  bool all_pass = true;
  for (const auto& c : kCriteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::printf("criterion %d %s: %s | %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
