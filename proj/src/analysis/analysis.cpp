#include "flowtrpo/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <json.hpp>

#include "flowtrpo/diffcore/errors.hpp"
#include "flowtrpo/nets/adam.hpp"

namespace flowtrpo::analysis {

std::vector<double> Distribution::log_prob(const Tensor& points) const {
  return policies::log_probs(*policy, theta, state, points);
}

Tensor Distribution::sample(std::size_t n, Rng& rng) const {
  return policies::sample_actions(*policy, theta, state, n, rng).actions;
}

std::vector<double> SampleStats::variance() const {
  const std::size_t d = mean.size();
  std::vector<double> v(d);
  for (std::size_t j = 0; j < d; ++j) v[j] = covariance[j * d + j];
  return v;
}

double SampleStats::correlation(std::size_t i, std::size_t j) const {
  const std::size_t d = mean.size();
  return covariance[i * d + j] / std::sqrt(covariance[i * d + i] * covariance[j * d + j]);
}

SampleStats sample_stats(const Tensor& samples) {
  const std::size_t n = samples.rows(), d = samples.cols();
  if (n < 2) throw ConfigError("sample_stats needs at least two samples");
  SampleStats s{std::vector<double>(d, 0.0), std::vector<double>(d * d, 0.0)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += samples(r, j);
  }
  for (auto& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        s.covariance[i * d + j] += (samples(r, i) - s.mean[i]) * (samples(r, j) - s.mean[j]);
      }
    }
  }
  for (auto& c : s.covariance) c /= static_cast<double>(n - 1);
  return s;
}

double support_radius(const Tensor& samples) {
  std::vector<double> norms(samples.rows());
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < samples.cols(); ++j) s += samples(r, j) * samples(r, j);
    norms[r] = std::sqrt(s);
  }
  const auto k = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(norms.size()))) - 1;
  std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(k), norms.end());
  return norms[k];
}

Grid density_grid(const Distribution& dist, double lo, double hi, std::size_t resolution) {
  if (dist.policy->act_dim() != 2) throw ConfigError("density_grid: 2-D distributions only");
  if (resolution < 2 || !(hi > lo)) throw ConfigError("density_grid: need resolution >= 2 and hi > lo");
  Grid g;
  g.xs.resize(resolution);
  for (std::size_t i = 0; i < resolution; ++i) {
    g.xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
  }
  g.ys = g.xs;
  Tensor points(resolution * resolution, 2);
  for (std::size_t iy = 0; iy < resolution; ++iy) {
    for (std::size_t ix = 0; ix < resolution; ++ix) {
      points(iy * resolution + ix, 0) = g.xs[ix];
      points(iy * resolution + ix, 1) = g.ys[iy];
    }
  }
  g.logp = dist.log_prob(points);
  return g;
}

double integrate(const Grid& grid) {
  const std::size_t nx = grid.xs.size(), ny = grid.ys.size();
  const double hx = (grid.xs.back() - grid.xs.front()) / static_cast<double>(nx - 1);
  const double hy = (grid.ys.back() - grid.ys.front()) / static_cast<double>(ny - 1);
  double total = 0.0;
  for (std::size_t iy = 0; iy < ny; ++iy) {
    const double wy = (iy == 0 || iy == ny - 1) ? 0.5 : 1.0;
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const double wx = (ix == 0 || ix == nx - 1) ? 0.5 : 1.0;
      total += wx * wy * std::exp(grid.logp[iy * nx + ix]);
    }
  }
  return total * hx * hy;
}

namespace {

double reference_log_density_mean(const Tensor& reference, double sigma) {
  const double d = static_cast<double>(reference.cols());
  double sq = 0.0;
  for (double v : reference.data()) sq += v * v;
  return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) -
         sq / (2.0 * sigma * sigma * static_cast<double>(reference.rows()));
}

Var mean_log_variance(Var samples) {
  const std::size_t d = samples.value().cols();
  Var total = samples.tape().constant(0.0);
  for (std::size_t j = 0; j < d; ++j) {
    Var col = slice_cols(samples, j, j + 1);
    total = total + log(mean(square(col - mean(col))));
  }
  return scale(total, 1.0 / static_cast<double>(d));
}

Distribution make_distribution(policies::PolicyKind kind, const policies::PolicyArch& arch, std::size_t dim,
                               double bound) {
  Distribution dist;
  dist.policy = policies::make_policy(kind, 1, dim, arch, policies::ActionBox::symmetric(dim, bound));
  dist.state = Tensor(1, 1, 0.0);
  return dist;
}

}  // namespace

double kl_to_reference(const Distribution& dist, const Tensor& reference, double sigma) {
  const auto lp = dist.log_prob(reference);
  double m = 0.0;
  for (double v : lp) m += v;
  return reference_log_density_mean(reference, sigma) - m / static_cast<double>(lp.size());
}

KlBallResult fit_to_kl_boundary(const KlBallSpec& spec, std::uint64_t seed) {
  if (!(spec.sigma > 0.0) || !(spec.epsilon > 0.0) || spec.n_ref < 2) {
    throw ConfigError("klball: sigma, epsilon must be positive and n_ref >= 2");
  }
  KlBallResult out{make_distribution(spec.kind, spec.arch, 2, 1.0), Tensor(), {}};
  Distribution& dist = out.fitted;
  const policies::Policy& policy = *dist.policy;

  Rng ref_rng = Rng::substream(seed, "reference");
  out.reference = ref_rng.normal_tensor(spec.n_ref, 2);
  for (double& v : out.reference.data()) v *= spec.sigma;

  Rng init = Rng::substream(seed, "init");
  dist.theta = policy.init(init).values;
  Rng draw = Rng::substream(seed, "variance");
  nets::Adam adam;
  adam.step_size = spec.step_size;
  FitReport& rep = out.report;

  const std::size_t batch = std::min(spec.batch == 0 ? spec.n_ref : spec.batch, spec.n_ref);
  double beta = spec.beta;
  for (std::size_t step = 0;; ++step) {
    const bool annealing = step >= spec.explore_steps;
    if (annealing) beta *= spec.beta_decay;
    if ((annealing && step % spec.check_every == 0) || step % 100 == 0 || step == spec.max_steps) {
      const double kl_full = kl_to_reference(dist, out.reference, spec.sigma);
      if (step % 100 == 0) rep.trace.emplace_back(step, kl_full);
      if (annealing && std::abs(kl_full - spec.epsilon) < spec.tolerance * spec.epsilon) {
        rep.converged = true;
        rep.steps = step;
        break;
      }
    }
    if (step == spec.max_steps) {
      rep.steps = step;
      rep.message = "KL did not reach the boundary within " + std::to_string(spec.max_steps) + " steps";
      break;
    }
    Tensor points(batch, 2);
    for (std::size_t r = 0; r < batch; ++r) {
      const std::size_t k = batch == spec.n_ref ? r : draw.index(spec.n_ref);
      points(r, 0) = out.reference(k, 0);
      points(r, 1) = out.reference(k, 1);
    }
    Tape tape;
    Var theta = tape.leaf(Tensor::row(dist.theta));
    Var state = tape.constant(dist.state);
    const double points_term = reference_log_density_mean(points, spec.sigma);
    Var kl = tape.constant(points_term) - mean(policy.log_prob(theta, state, tape.constant(std::move(points))));
    Var samples = policy.sample(theta, state, spec.variance_samples, draw).actions;
    if (spec.spread_clip > 0.0) {
      const double c = spec.spread_clip * spec.sigma;
      samples = scale(tanh(scale(samples, 1.0 / c)), c);
    }
    Var objective = square(kl - spec.epsilon) - beta * mean_log_variance(samples);
    adam.step(dist.theta, tape.gradient(objective, theta));
  }

  rep.final_kl = kl_to_reference(dist, out.reference, spec.sigma);
  Rng report_rng = Rng::substream(seed, "report");
  const Tensor samples = dist.sample(spec.report_samples, report_rng);
  rep.sample_variance = sample_stats(samples).variance();
  rep.effective_support_radius = support_radius(samples);
  return out;
}

Distribution distribution_of(const trpo::Trainer& trainer) {
  const auto& env = trainer.env();
  Distribution d;
  d.policy = policies::make_policy(trainer.settings().policy, env.obs_dim(), env.act_dim(), trainer.settings().arch,
                                   env.box());
  d.theta.assign(trainer.theta().begin(), trainer.theta().end());
  d.state = Tensor(1, env.obs_dim(), 0.0);
  return d;
}

std::vector<double> maxent_target_covariance(const envs::EnvSpec& env, double temperature) {
  std::vector<double> c(env.sigma.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * temperature * env.sigma[i];
  return c;
}

std::vector<double> mode_masses(const Tensor& samples, const std::vector<std::vector<double>>& modes) {
  std::vector<double> mass(modes.size(), 0.0);
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < modes.size(); ++m) {
      double d = 0.0;
      for (std::size_t j = 0; j < samples.cols(); ++j) d += (samples(r, j) - modes[m][j]) * (samples(r, j) - modes[m][j]);
      if (d < best_d) {
        best_d = d;
        best = m;
      }
    }
    mass[best] += 1.0;
  }
  for (auto& m : mass) m /= static_cast<double>(samples.rows());
  return mass;
}

MaxentResult maxent_bandit_fit(const MaxentSpec& spec) {
  if (spec.env.kind == envs::EnvKind::PointMass) throw ConfigError("maxent fits need a bandit env");
  if (!(spec.temperature > 0.0)) throw ConfigError("maxent temperature must be positive");
  trpo::TrainSettings s;
  s.env = spec.env;
  s.policy = spec.kind;
  s.arch = spec.arch;
  s.trpo = spec.trpo;
  s.trpo.entropy_coef = spec.temperature;
  s.batch_size = spec.batch_size;
  s.normalize_advantages = false;
  s.seed = spec.seed;

  MaxentResult out;
  out.trainer = std::make_unique<trpo::Trainer>(s);
  MaxentReport& rep = out.report;
  for (std::size_t i = 0; i < spec.iterations; ++i) {
    if (out.trainer->iterate().update.accepted) ++rep.accepted_updates;
  }
  rep.iterations = spec.iterations;
  const auto& returns = out.trainer->state().returns;
  const std::size_t tail = std::min<std::size_t>(10, returns.size());
  for (std::size_t i = returns.size() - tail; i < returns.size(); ++i) rep.final_return += returns[i];
  if (tail > 0) rep.final_return /= static_cast<double>(tail);

  Rng report_rng = Rng::substream(spec.seed, "report");
  out.samples = distribution_of(*out.trainer).sample(spec.report_samples, report_rng);
  const auto stats = sample_stats(out.samples);
  rep.mean = stats.mean;
  rep.covariance = stats.covariance;
  rep.correlation = stats.correlation();
  if (spec.env.kind == envs::EnvKind::CorrBandit) {
    rep.target_covariance = maxent_target_covariance(spec.env, spec.temperature);
    double sq = 0.0;
    for (std::size_t i = 0; i < rep.covariance.size(); ++i) {
      sq += (rep.covariance[i] - rep.target_covariance[i]) * (rep.covariance[i] - rep.target_covariance[i]);
    }
    rep.covariance_error = std::sqrt(sq);
  } else {
    rep.mode_mass = mode_masses(out.samples, spec.env.modes);
  }
  return out;
}

void write_samples_csv(std::ostream& out, const Tensor& samples) {
  out << "x,y\n";
  out.precision(17);
  for (std::size_t r = 0; r < samples.rows(); ++r) out << samples(r, 0) << ',' << samples(r, 1) << '\n';
}

void write_grid_csv(std::ostream& out, const Grid& grid) {
  out << "x,y,logp\n";
  out.precision(17);
  for (std::size_t iy = 0; iy < grid.ys.size(); ++iy) {
    for (std::size_t ix = 0; ix < grid.xs.size(); ++ix) {
      out << grid.xs[ix] << ',' << grid.ys[iy] << ',' << grid.logp[iy * grid.xs.size() + ix] << '\n';
    }
  }
}

std::string to_json(const FitReport& r) {
  nlohmann::json j;
  j["converged"] = r.converged;
  j["steps"] = r.steps;
  j["final_kl"] = r.final_kl;
  j["sample_variance"] = r.sample_variance;
  j["effective_support_radius"] = r.effective_support_radius;
  j["trace"] = nlohmann::json::array();
  for (const auto& [step, kl] : r.trace) j["trace"].push_back({{"step", step}, {"kl", kl}});
  j["message"] = r.message;
  return j.dump(2);
}

std::string to_json(const MaxentReport& r) {
  nlohmann::json j;
  j["iterations"] = r.iterations;
  j["accepted_updates"] = r.accepted_updates;
  j["final_return"] = r.final_return;
  j["mean"] = r.mean;
  j["covariance"] = r.covariance;
  j["correlation"] = r.correlation;
  if (!r.target_covariance.empty()) {
    j["target_covariance"] = r.target_covariance;
    j["covariance_error"] = r.covariance_error;
  }
  if (!r.mode_mass.empty()) j["mode_mass"] = r.mode_mass;
  return j.dump(2);
}

}  // namespace flowtrpo::analysis
