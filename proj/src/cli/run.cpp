#include "flowtrpo/cli/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "flowtrpo/diffcore/errors.hpp"
#include "flowtrpo/envs/value.hpp"

namespace flowtrpo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_output(const std::string& dir) {
  fs::path p(dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') return fs::path(root) / p;
  return p;
}

void write_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json adam_json(const nets::Adam& a) {
  return {{"step_size", a.step_size}, {"beta1", a.beta1},   {"beta2", a.beta2}, {"epsilon", a.epsilon},
          {"first", a.first},         {"second", a.second}, {"steps", a.steps}};
}

nets::Adam adam_from(const json& j) {
  nets::Adam a;
  a.step_size = j.at("step_size").get<double>();
  a.beta1 = j.at("beta1").get<double>();
  a.beta2 = j.at("beta2").get<double>();
  a.epsilon = j.at("epsilon").get<double>();
  a.first = j.at("first").get<std::vector<double>>();
  a.second = j.at("second").get<std::vector<double>>();
  a.steps = j.at("steps").get<long>();
  return a;
}

std::string report_json(const RunConfig& cfg, const TrainOutcome& outcome, std::size_t timesteps,
                        std::size_t accepted) {
  json j;
  j["status"] = outcome.exit_code == kExitOk ? "ok" : "numeric-abort";
  j["iterations"] = outcome.iterations;
  j["timesteps"] = timesteps;
  j["accepted_updates"] = accepted;
  j["final_return_mean"] = outcome.final_return.mean;
  j["final_return_std"] = outcome.final_return.std;
  j["final_return_window"] = outcome.final_return.count;
  j["env"] = envs::to_string(cfg.train.env.kind);
  j["policy"] = policies::to_string(cfg.train.policy);
  j["seed"] = cfg.train.seed;
  if (!outcome.error.empty()) j["error"] = outcome.error;
  return j.dump(2) + "\n";
}

/// Existing log rows up to and including `iteration`.
std::vector<std::string> previous_log(const fs::path& path, std::size_t iteration) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoull(line.substr(0, comma)) <= iteration) rows.push_back(line);
  }
  return rows;
}

std::string log_text(const std::vector<std::string>& rows) {
  std::string out = trpo::log_header() + "\n";
  for (const auto& r : rows) out += r + "\n";
  return out;
}

}  // namespace

std::string checkpoint_json(const RunConfig& config, const trpo::TrainerState& s) {
  json j;
  j["format"] = 1;
  j["config"] = to_text(config);
  j["iteration"] = s.iteration;
  j["timesteps"] = s.timesteps;
  j["theta"] = s.theta;
  j["vf_params"] = s.vf_params;
  j["vf_adam"] = adam_json(s.vf_adam);
  j["rng"] = {{"rollout", s.rollout_rng.serialize()},
              {"entropy-mc", s.entropy_rng.serialize()},
              {"kl-mc", s.kl_rng.serialize()},
              {"vf", s.vf_rng.serialize()}};
  j["returns"] = s.returns;
  return j.dump() + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format").get<int>() != 1) throw ConfigError("unsupported checkpoint format");
    Checkpoint c;
    c.config = parse_config(j.at("config").get<std::string>(), "checkpoint config");
    c.state.iteration = j.at("iteration").get<std::size_t>();
    c.state.timesteps = j.at("timesteps").get<std::size_t>();
    c.state.theta = j.at("theta").get<std::vector<double>>();
    c.state.vf_params = j.at("vf_params").get<std::vector<double>>();
    c.state.vf_adam = adam_from(j.at("vf_adam"));
    const auto& rng = j.at("rng");
    c.state.rollout_rng = Rng::deserialize(rng.at("rollout").get<std::string>());
    c.state.entropy_rng = Rng::deserialize(rng.at("entropy-mc").get<std::string>());
    c.state.kl_rng = Rng::deserialize(rng.at("kl-mc").get<std::string>());
    c.state.vf_rng = Rng::deserialize(rng.at("vf").get<std::string>());
    c.state.returns = j.at("returns").get<std::vector<double>>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const fs::path& path) { return parse_checkpoint(read_file(path)); }

Summary tail_summary(const std::vector<double>& xs, std::size_t window) {
  Summary s;
  s.count = std::min(window, xs.size());
  if (s.count == 0) return s;
  const auto first = xs.end() - static_cast<std::ptrdiff_t>(s.count);
  for (auto it = first; it != xs.end(); ++it) s.mean += *it;
  s.mean /= static_cast<double>(s.count);
  for (auto it = first; it != xs.end(); ++it) s.std += (*it - s.mean) * (*it - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(s.count));
  return s;
}

TrainOutcome run_train(const RunConfig& cfg, const TrainOptions& options) {
  TrainOutcome outcome;
  outcome.output_dir = resolve_output(cfg.output_dir);
  const fs::path dir = outcome.output_dir;

  std::unique_ptr<trpo::Trainer> trainer;
  std::vector<std::string> rows;
  if (options.resume) {
    auto ckpt = load_checkpoint(*options.resume);
    if (!(ckpt.config.train == cfg.train)) {
      throw ConfigError("checkpoint settings differ from the requested run");
    }
    trainer = std::make_unique<trpo::Trainer>(cfg.train, std::move(ckpt.state));
    rows = previous_log(dir / "log.csv", trainer->state().iteration);
  } else {
    trainer = std::make_unique<trpo::Trainer>(cfg.train);
  }
  fs::create_directories(dir);
  write_atomic(dir / "config.txt", to_text(cfg));

  std::size_t accepted = 0;
  auto save_checkpoint = [&] { write_atomic(dir / "checkpoint.json", checkpoint_json(cfg, trainer->state())); };
  try {
    while (trainer->state().timesteps < cfg.total_timesteps) {
      const auto rec = trainer->iterate();
      if (rec.update.accepted) ++accepted;
      rows.push_back(rec.log_line());
      write_atomic(dir / "log.csv", log_text(rows));
      if (options.progress != nullptr) *options.progress << rows.back() << '\n';
      if (cfg.checkpoint_every > 0 && rec.iteration % cfg.checkpoint_every == 0) save_checkpoint();
    }
  } catch (const NumericError& e) {
    outcome.exit_code = kExitNumeric;
    outcome.error = e.what();
  }
  write_atomic(dir / "log.csv", log_text(rows));
  save_checkpoint();
  outcome.iterations = trainer->state().iteration;
  outcome.final_return = tail_summary(trainer->state().returns);
  write_atomic(dir / "report.json", report_json(cfg, outcome, trainer->state().timesteps, accepted));
  return outcome;
}

double ablation_spread(const std::vector<AblationRow>& rows) {
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::vector<double>>> cells;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    auto key = std::make_pair(r.layers, r.hidden);
    auto it = std::find_if(cells.begin(), cells.end(), [&](const auto& c) { return c.first == key; });
    if (it == cells.end()) {
      cells.push_back({key, {}});
      it = cells.end() - 1;
    }
    it->second.push_back(r.final_return);
  }
  if (cells.empty()) return std::numeric_limits<double>::infinity();
  std::vector<double> means;
  for (const auto& c : cells) {
    double m = 0.0;
    for (double v : c.second) m += v;
    means.push_back(m / static_cast<double>(c.second.size()));
  }
  std::sort(means.begin(), means.end());
  const std::size_t n = means.size();
  const double median = n % 2 == 1 ? means[n / 2] : 0.5 * (means[n / 2 - 1] + means[n / 2]);
  return (means.back() - means.front()) / std::abs(median);
}

AblationResult run_ablation(const RunConfig& base, const std::vector<std::size_t>& layers,
                            const std::vector<std::size_t>& hidden, const std::vector<std::uint64_t>& seeds,
                            const fs::path& root, std::ostream* progress) {
  if (layers.empty() || hidden.empty() || seeds.empty()) throw ConfigError("ablation grid must be non-empty");
  AblationResult result;
  auto csv = [&] {
    std::ostringstream out;
    out << "K,l1,seed,final_return,final_std,status\n";
    out.precision(17);
    for (const auto& r : result.rows) {
      out << r.layers << ',' << r.hidden << ',' << r.seed << ',' << r.final_return << ',' << r.final_std << ','
          << r.status << '\n';
    }
    return out.str();
  };
  for (std::size_t k : layers) {
    for (std::size_t l1 : hidden) {
      for (std::uint64_t seed : seeds) {
        RunConfig cfg = base;
        cfg.train.arch.flow_layers = k;
        cfg.train.arch.flow_hidden = l1;
        cfg.train.seed = seed;
        cfg.output_dir = (root / ("K" + std::to_string(k) + "_l" + std::to_string(l1) + "_seed" + std::to_string(seed))).string();
        AblationRow row{k, l1, seed, 0.0, 0.0, "ok"};
        try {
          validate_config(cfg);
          const auto outcome = run_train(cfg);
          row.final_return = outcome.final_return.mean;
          row.final_std = outcome.final_return.std;
          if (outcome.exit_code != kExitOk) row.status = "numeric-abort";
        } catch (const Error& e) {
          row.status = "failed";
          if (progress != nullptr) *progress << "cell K=" << k << " l1=" << l1 << " seed=" << seed << ": " << e.what() << '\n';
        }
        result.rows.push_back(row);
        write_atomic(root / "ablation.csv", csv());
        if (progress != nullptr) {
          *progress << "K=" << k << " l1=" << l1 << " seed=" << seed << " final_return=" << row.final_return << " ("
                    << row.status << ")\n";
        }
      }
    }
  }
  result.spread = ablation_spread(result.rows);
  return result;
}

double run_eval(const fs::path& checkpoint, std::size_t episodes, std::uint64_t seed) {
  auto ckpt = load_checkpoint(checkpoint);
  trpo::Trainer trainer(ckpt.config.train, std::move(ckpt.state));
  Rng rng = Rng::substream(seed, "eval");
  return trainer.evaluate(episodes, rng);
}

void run_dump_batch(const trpo::Trainer& trainer, const fs::path& out, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "dump-batch");
  const auto batch = trainer.prepared_batch(rng);
  std::ostringstream ss;
  envs::write_batch_csv(ss, batch);
  write_atomic(out, ss.str());
}

namespace {

void write_distribution_files(const fs::path& dir, const Tensor& samples, const analysis::Grid& grid,
                              const std::string& report) {
  std::ostringstream s, g;
  analysis::write_samples_csv(s, samples);
  analysis::write_grid_csv(g, grid);
  write_atomic(dir / "samples.csv", s.str());
  write_atomic(dir / "grid.csv", g.str());
  write_atomic(dir / "report.json", report + "\n");
}

constexpr std::size_t kExportSamples = 2000;
constexpr std::size_t kGridResolution = 101;

Tensor head_rows(const Tensor& t, std::size_t n) {
  n = std::min(n, t.rows());
  Tensor out(n, t.cols());
  std::copy_n(t.data().begin(), n * t.cols(), out.data().begin());
  return out;
}

}  // namespace

analysis::FitReport run_klball(const analysis::KlBallSpec& spec, std::uint64_t seed, const fs::path& dir) {
  auto result = analysis::fit_to_kl_boundary(spec, seed);
  Rng rng = Rng::substream(seed, "export");
  const Tensor samples = result.fitted.sample(kExportSamples, rng);
  const double half = 6.0 * spec.sigma;
  const auto grid = analysis::density_grid(result.fitted, -half, half, kGridResolution);
  write_distribution_files(dir, samples, grid, analysis::to_json(result.report));
  std::ostringstream ref;
  analysis::write_samples_csv(ref, head_rows(result.reference, kExportSamples));
  write_atomic(dir / "reference.csv", ref.str());
  return result.report;
}

analysis::MaxentReport run_maxent(const analysis::MaxentSpec& spec, const fs::path& dir) {
  auto result = analysis::maxent_bandit_fit(spec);
  const auto dist = analysis::distribution_of(*result.trainer);
  const auto grid = analysis::density_grid(dist, -2.0, 2.0, kGridResolution);
  write_distribution_files(dir, head_rows(result.samples, kExportSamples), grid, analysis::to_json(result.report));
  return result.report;
}

}  // namespace flowtrpo::cli
