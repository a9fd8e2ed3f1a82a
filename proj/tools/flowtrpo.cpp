// Command-line front end: train, ablate, analyze, eval, dump-batch.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowtrpo/cli/config.hpp"
#include "flowtrpo/cli/run.hpp"
#include "flowtrpo/diffcore/errors.hpp"

namespace fs = std::filesystem;
using namespace flowtrpo;

namespace {

/// Config file plus per-key flags and --set overrides shared by several subcommands.
struct ConfigSource {
  std::string file;
  std::map<std::string, std::string> flags;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "override as key=value (repeatable)");
    auto* group = app->add_option_group("config keys", "Any config key may be given as --<key> <value>");
    for (const auto& key : cli::config_keys()) group->add_option("--" + key, flags[key]);
  }

  cli::RunConfig build(CLI::App* app) const {
    cli::RunConfig cfg;
    std::set<std::string> given;
    if (!file.empty()) {
      cfg = cli::load_config_file(file);
      given.insert(cli::required_config_keys().begin(), cli::required_config_keys().end());
    }
    for (const auto& key : cli::config_keys()) {
      if (app->count("--" + key) > 0) {
        cli::set_config_value(cfg, key, flags.at(key));
        given.insert(key);
      }
    }
    for (const auto& s : sets) {
      cli::apply_override(cfg, s);
      given.insert(s.substr(0, s.find('=')));
    }
    for (const auto& key : cli::required_config_keys()) {
      if (!given.contains(key)) throw ConfigError("missing required key '" + key + "'");
    }
    cli::validate_config(cfg);
    return cfg;
  }
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(static_cast<T>(std::stoull(item, &used)));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": bad list entry '" + item + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int report_outcome(const cli::TrainOutcome& o) {
  std::printf("iterations %zu  final return %.6g +- %.6g (last %zu)\n", o.iterations, o.final_return.mean,
              o.final_return.std, o.final_return.count);
  std::printf("output %s\n", o.output_dir.string().c_str());
  if (!o.error.empty()) std::fprintf(stderr, "numeric abort: %s\n", o.error.c_str());
  return o.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trust-region policy optimization with normalizing-flow policies"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train one policy; writes log.csv, checkpoint.json, report.json");
  ConfigSource train_cfg;
  train_cfg.attach(train);
  std::string resume;
  bool quiet = false;
  train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_flag("-q,--quiet", quiet, "no per-iteration output");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Flow K x l1 grid; writes ablation.csv");
  ConfigSource ablate_cfg;
  ablate_cfg.attach(ablate);
  std::string layers = "2,4,6", hidden = "3,5,7", seeds = "0";
  std::string ablate_out = "ablation";
  ablate->add_option("--layers", layers, "K values")->capture_default_str();
  ablate->add_option("--hidden", hidden, "l1 values")->capture_default_str();
  ablate->add_option("--seeds", seeds, "seeds")->capture_default_str();
  ablate->add_option("-o,--out", ablate_out, "grid output directory")->capture_default_str();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "KL-ball and max-entropy bandit studies");
  analyze->require_subcommand(1);
  std::string kind = "flow", analyze_out;
  std::uint64_t analyze_seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--kind", kind, "candidate policy kind")->capture_default_str();
    sub->add_option("--seed", analyze_seed, "seed")->capture_default_str();
    sub->add_option("-o,--out", analyze_out, "output directory")->required();
  };
  analysis::KlBallSpec kb;
  auto* klball = analyze->add_subcommand("klball", "Fit a candidate onto the KL-ball boundary");
  add_common(klball);
  klball->add_option("--sigma", kb.sigma, "reference standard deviation")->capture_default_str();
  klball->add_option("--epsilon", kb.epsilon, "KL radius")->capture_default_str();
  klball->add_option("--n-ref", kb.n_ref, "reference sample count")->capture_default_str();
  klball->add_option("--beta", kb.beta, "variance pressure weight")->capture_default_str();
  klball->add_option("--max-steps", kb.max_steps, "step budget")->capture_default_str();
  analysis::MaxentSpec me;
  auto add_maxent = [&](CLI::App* sub) {
    add_common(sub);
    sub->add_option("--temperature", me.temperature, "entropy coefficient c")->capture_default_str();
    sub->add_option("--iterations", me.iterations, "TRPO iterations")->capture_default_str();
    sub->add_option("--batch", me.batch_size, "samples per iteration")->capture_default_str();
    sub->add_option("--max-kl", me.trpo.max_kl, "trust-region radius")->capture_default_str();
  };
  auto* maxent_corr = analyze->add_subcommand("maxent-corr", "Max-entropy fit on the correlated bandit");
  add_maxent(maxent_corr);
  auto* maxent_bimodal = analyze->add_subcommand("maxent-bimodal", "Max-entropy fit on the bimodal bandit");
  add_maxent(maxent_bimodal);

  // eval
  auto* eval = app.add_subcommand("eval", "Roll out a checkpoint and print its mean return");
  std::string eval_ckpt;
  std::size_t episodes = 20;
  std::uint64_t eval_seed = 0;
  eval->add_option("checkpoint", eval_ckpt, "checkpoint.json")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "episodes")->capture_default_str();
  eval->add_option("--seed", eval_seed, "seed")->capture_default_str();

  // dump-batch
  auto* dump = app.add_subcommand("dump-batch", "Collect one batch and write it as CSV");
  ConfigSource dump_cfg;
  dump_cfg.attach(dump);
  std::string dump_ckpt, dump_out;
  std::uint64_t dump_seed = 0;
  dump->add_option("--checkpoint", dump_ckpt, "use this checkpoint's policy")->check(CLI::ExistingFile);
  dump->add_option("-o,--out", dump_out, "CSV path")->required();
  dump->add_option("--seed", dump_seed, "seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitConfig;
  }

  try {
    if (train->parsed()) {
      const auto cfg = train_cfg.build(train);
      cli::TrainOptions opts;
      if (!resume.empty()) opts.resume = resume;
      if (!quiet) {
        std::cout << trpo::log_header() << '\n';
        opts.progress = &std::cout;
      }
      return report_outcome(cli::run_train(cfg, opts));
    }
    if (ablate->parsed()) {
      const auto base = ablate_cfg.build(ablate);
      const auto result = cli::run_ablation(base, parse_list<std::size_t>(layers, "--layers"),
                                            parse_list<std::size_t>(hidden, "--hidden"),
                                            parse_list<std::uint64_t>(seeds, "--seeds"),
                                            cli::resolve_output(ablate_out), &std::cout);
      std::printf("spread %.6g\n", result.spread);
      return cli::kExitOk;
    }
    if (analyze->parsed()) {
      const auto out = cli::resolve_output(analyze_out);
      if (klball->parsed()) {
        kb.kind = policies::parse_policy_kind(kind);
        const auto r = cli::run_klball(kb, analyze_seed, out);
        std::printf("converged %d  final_kl %.6g  variance %.6g %.6g  radius %.6g\n", r.converged, r.final_kl,
                    r.sample_variance[0], r.sample_variance[1], r.effective_support_radius);
        return r.converged ? cli::kExitOk : cli::kExitNumeric;
      }
      me.kind = policies::parse_policy_kind(kind);
      me.seed = analyze_seed;
      me.env.kind = maxent_corr->parsed() ? envs::EnvKind::CorrBandit : envs::EnvKind::BimodalBandit;
      const auto r = cli::run_maxent(me, out);
      std::printf("correlation %.6g  final_return %.6g", r.correlation, r.final_return);
      for (std::size_t i = 0; i < r.mode_mass.size(); ++i) std::printf("  mode%zu %.4f", i, r.mode_mass[i]);
      std::printf("\n");
      return cli::kExitOk;
    }
    if (eval->parsed()) {
      std::printf("%.10g\n", cli::run_eval(eval_ckpt, episodes, eval_seed));
      return cli::kExitOk;
    }
    if (dump->parsed()) {
      if (!dump_ckpt.empty()) {
        auto ckpt = cli::load_checkpoint(dump_ckpt);
        trpo::Trainer trainer(ckpt.config.train, std::move(ckpt.state));
        cli::run_dump_batch(trainer, cli::resolve_output(dump_out), dump_seed);
      } else {
        trpo::Trainer trainer(dump_cfg.build(dump).train);
        cli::run_dump_batch(trainer, cli::resolve_output(dump_out), dump_seed);
      }
      return cli::kExitOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return cli::kExitConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return cli::kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitNumeric;
  }
  return cli::kExitConfig;
}
