#include "flowtrpo/trpo/trpo.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "flowtrpo/diffcore/errors.hpp"
#include "flowtrpo/policies/estimators.hpp"

namespace flowtrpo::trpo {

void TrpoConfig::validate() const {
  if (!(max_kl > 0.0)) throw ConfigError("trpo.max_kl must be positive");
  if (!(cg_damping >= 0.0)) throw ConfigError("trpo.cg_damping must be non-negative");
  if (cg_iters == 0) throw ConfigError("trpo.cg_iters must be positive");
  if (!(hvp_fd_step > 0.0)) throw ConfigError("trpo.hvp_fd_step must be positive");
  if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0)) throw ConfigError("trpo.backtrack_ratio must be in (0, 1)");
  if (max_backtracks == 0) throw ConfigError("trpo.max_backtracks must be positive");
  if (!(entropy_coef >= 0.0)) throw ConfigError("trpo.entropy_coef must be non-negative");
  if (entropy_samples == 0) throw ConfigError("trpo.entropy_samples must be positive");
  if (kl_samples == 0) throw ConfigError("trpo.kl_samples must be positive");
  if (fvp_subsample == 0) throw ConfigError("trpo.fvp_subsample must be positive");
}

UpdateData UpdateData::from_batch(const envs::TrajectoryBatch& batch) {
  return UpdateData{batch.states, batch.actions, batch.old_log_probs, batch.advantages};
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + " produced a non-finite value");
  }
}

Tensor pick_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  Tensor out(rows.size(), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < t.cols(); ++c) out(i, c) = t(rows[i], c);
  }
  return out;
}

Tensor every_kth_row(const Tensor& t, std::size_t k) {
  if (k <= 1) return t;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < t.rows(); i += k) rows.push_back(i);
  return pick_rows(t, rows);
}

Tensor entropy_rows(const Tensor& states, std::size_t limit) {
  const std::size_t n = states.rows();
  if (limit == 0 || limit >= n) return states;
  std::vector<std::size_t> rows(limit);
  for (std::size_t i = 0; i < limit; ++i) rows[i] = i * n / limit;
  return pick_rows(states, rows);
}

Var entropy_term(const policies::Policy& policy, Var theta, const Tensor& states, const TrpoConfig& cfg,
                 std::uint64_t seed) {
  Tape& tape = theta.tape();
  Var chosen = tape.constant(entropy_rows(states, cfg.entropy_states));
  if (auto closed = policy.entropy(theta, chosen)) return mean(*closed);
  Rng rng(seed);
  return policies::entropy_mc(policy, theta, chosen, cfg.entropy_samples, rng).value;
}

}  // namespace

Var surrogate(const policies::Policy& policy, Var theta, const UpdateData& data, const TrpoConfig& cfg,
              std::uint64_t entropy_seed) {
  const std::size_t n = data.states.rows();
  if (n == 0) throw ConfigError("surrogate: empty batch");
  if (data.old_log_probs.size() != n || data.advantages.size() != n || data.actions.rows() != n) {
    throw ConfigError("surrogate: batch columns disagree in length");
  }
  Tape& tape = theta.tape();
  Var lp = policy.log_prob(theta, tape.constant(data.states), tape.constant(data.actions));
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = lp.value()(i, 0) - data.old_log_probs[i];
    if (gap > 30.0 || gap < -30.0) {
      throw NumericError("surrogate: log-ratio " + std::to_string(gap) + " signals policy collapse");
    }
  }
  Var ratio = exp(lp - tape.constant(Tensor::column(data.old_log_probs)));
  Var value = mean(ratio * tape.constant(Tensor::column(data.advantages)));
  if (cfg.entropy_coef > 0.0) value = value + cfg.entropy_coef * entropy_term(policy, theta, data.states, cfg, entropy_seed);
  return value;
}

KlEstimator::KlEstimator(const policies::Policy& policy, std::span<const double> old_theta, const Tensor& states,
                         std::size_t draws_per_state, std::uint64_t seed)
    : policy_(policy), old_theta_(old_theta.begin(), old_theta.end()), states_(states) {
  if (states.rows() == 0) throw ConfigError("kl estimator: no states");
  {
    Tape probe;
    Var t = probe.constant(Tensor::row(old_theta_));
    analytic_ = policy.kl(t, t, probe.constant(states.rows_slice(0, 1))).has_value();
  }
  if (analytic_) return;
  if (draws_per_state == 0) throw ConfigError("kl estimator: draws_per_state must be positive");
  sample_states_ = policies::repeat_each_row(states, draws_per_state);
  Rng rng(seed);
  auto draws = policies::sample_actions(policy, old_theta_, sample_states_, sample_states_.rows(), rng);
  sample_actions_ = std::move(draws.actions);
  sample_old_log_probs_ = std::move(draws.log_probs);
}

Var KlEstimator::operator()(Var theta) const {
  Tape& tape = theta.tape();
  if (analytic_) {
    Var old = tape.constant(Tensor::row(old_theta_));
    return mean(*policy_.kl(old, theta, tape.constant(states_)));
  }
  return policies::kl_ratio_on_samples(policy_, theta, tape.constant(sample_states_), tape.constant(sample_actions_),
                                       sample_old_log_probs_);
}

double KlEstimator::value(std::span<const double> theta) const {
  Tape tape;
  return (*this)(tape.constant(Tensor::row(theta))).value().item();
}

std::vector<double> KlEstimator::gradient(std::span<const double> theta) const {
  Tape tape;
  Var leaf = tape.leaf(Tensor::row(theta));
  return tape.gradient((*this)(leaf), leaf);
}

std::vector<double> fisher_vector_product(const KlEstimator& kl, std::span<const double> theta,
                                          std::span<const double> v, double fd_step, double damping) {
  const std::size_t n = theta.size();
  if (v.size() != n) throw ConfigError("fvp: vector length mismatch");
  require_finite(v, "fvp input");
  const double norm = std::sqrt(dot(v, v));
  std::vector<double> out(n, 0.0);
  if (norm == 0.0) return out;
  const double delta = fd_step / norm;
  std::vector<double> plus(theta.begin(), theta.end()), minus(theta.begin(), theta.end());
  for (std::size_t i = 0; i < n; ++i) {
    plus[i] += delta * v[i];
    minus[i] -= delta * v[i];
  }
  const auto gp = kl.gradient(plus);
  const auto gm = kl.gradient(minus);
  for (std::size_t i = 0; i < n; ++i) out[i] = (gp[i] - gm[i]) / (2.0 * delta) + damping * v[i];
  require_finite(out, "fisher-vector product");
  return out;
}

CgResult conjugate_gradient(const MatVec& matvec, std::span<const double> g, std::size_t iters, double tol) {
  const std::size_t n = g.size();
  CgResult res;
  res.x.assign(n, 0.0);
  std::vector<double> r(g.begin(), g.end()), p(g.begin(), g.end());
  double rr = dot(r, r);
  const double g_norm = std::sqrt(rr);
  if (g_norm == 0.0) return res;
  for (std::size_t it = 0; it < iters; ++it) {
    const auto ap = matvec(p);
    const double pap = dot(p, ap);
    if (!std::isfinite(pap)) throw NumericError("conjugate gradient: non-finite curvature");
    if (pap <= 0.0) break;
    const double alpha = rr / pap;
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = dot(r, r);
    res.iterations = it + 1;
    require_finite(res.x, "conjugate gradient");
    if (std::sqrt(rr_new) / g_norm < tol) {
      rr = rr_new;
      break;
    }
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  res.residual = std::sqrt(rr) / g_norm;
  return res;
}

std::vector<double> scaled_step(std::span<const double> x, std::span<const double> hx, double max_kl) {
  const double shs = dot(x, hx);
  if (!(shs > 0.0)) throw NumericError("trust-region step: curvature x^T H x is not positive");
  const double scale = std::sqrt(2.0 * max_kl / shs);
  std::vector<double> step(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) step[i] = scale * x[i];
  return step;
}

double entropy_estimate(const policies::Policy& policy, std::span<const double> theta, const Tensor& states,
                        const TrpoConfig& cfg, std::uint64_t seed) {
  Tape tape;
  return entropy_term(policy, tape.constant(Tensor::row(theta)), states, cfg, seed).value().item();
}

UpdateResult trpo_update(const policies::Policy& policy, std::span<const double> theta, const UpdateData& data,
                         const TrpoConfig& cfg, const UpdateSeeds& seeds) {
  cfg.validate();
  UpdateResult result{std::vector<double>(theta.begin(), theta.end()), {}};
  UpdateReport& report = result.report;
  auto surrogate_value = [&](std::span<const double> p) {
    Tape tape;
    return surrogate(policy, tape.constant(Tensor::row(p)), data, cfg, seeds.entropy).value().item();
  };
  try {
    std::vector<double> g;
    {
      Tape tape;
      Var leaf = tape.leaf(Tensor::row(theta));
      Var s = surrogate(policy, leaf, data, cfg, seeds.entropy);
      report.surrogate_before = s.value().item();
      g = tape.gradient(s, leaf);
    }
    report.surrogate_after = report.surrogate_before;
    if (dot(g, g) == 0.0) return result;

    const KlEstimator fvp_kl(policy, theta, every_kth_row(data.states, cfg.fvp_subsample), cfg.kl_samples, seeds.kl);
    const KlEstimator line_kl(policy, theta, data.states, cfg.kl_samples, mix_seed(seeds.kl));
    auto matvec = [&](std::span<const double> v) {
      return fisher_vector_product(fvp_kl, theta, v, cfg.hvp_fd_step, cfg.cg_damping);
    };
    auto cg = conjugate_gradient(matvec, g, cfg.cg_iters, cfg.cg_tol);
    const auto hx = matvec(cg.x);
    report.shs = dot(cg.x, hx);
    double res2 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) res2 += (hx[i] - g[i]) * (hx[i] - g[i]);
    report.cg_residual = std::sqrt(res2 / dot(g, g));
    if (!(report.shs > 0.0)) return result;

    const auto full_step = scaled_step(cg.x, hx, cfg.max_kl);
    std::vector<double> candidate(theta.size());
    double s = 1.0;
    for (std::size_t k = 0; k < cfg.max_backtracks; ++k, s *= cfg.backtrack_ratio) {
      for (std::size_t i = 0; i < theta.size(); ++i) candidate[i] = theta[i] + s * full_step[i];
      report.backtracks = k;
      double kl = 0.0, surr = 0.0;
      try {
        kl = line_kl.value(candidate);
        surr = surrogate_value(candidate);
      } catch (const NumericError&) {
        continue;
      }
      if (kl <= cfg.max_kl && surr > report.surrogate_before) {
        report.accepted = true;
        report.kl_after = kl;
        report.surrogate_after = surr;
        report.step_scale = s;
        result.theta = candidate;
        return result;
      }
    }
  } catch (const NumericError& e) {
    report.error = e.what();
    report.accepted = false;
    result.theta.assign(theta.begin(), theta.end());
  }
  return result;
}

std::string log_header() {
  return "iter,timesteps,mean_return,surrogate_before,surrogate_after,kl_after,step_scale,cg_residual,"
         "entropy_estimate";
}

std::string log_line(std::size_t iter, std::size_t timesteps, double mean_return, const UpdateReport& r,
                     double entropy_estimate) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", iter, timesteps, mean_return,
                r.surrogate_before, r.surrogate_after, r.kl_after, r.step_scale, r.cg_residual, entropy_estimate);
  return buf;
}

}  // namespace flowtrpo::trpo
