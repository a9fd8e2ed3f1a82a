#include "flowtrpo/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "flowtrpo/diffcore/errors.hpp"

namespace flowtrpo::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view v) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a number, got '" + std::string(v) + "'");
  }
  return x;
}

std::uint64_t parse_u64(std::string_view v) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return x;
}

bool parse_bool(std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

std::vector<double> parse_doubles(std::string_view v) {
  std::vector<double> out;
  if (v.empty()) return out;
  for (auto part : split(v, ',')) out.push_back(parse_double(part));
  return out;
}

std::vector<std::size_t> parse_sizes(std::string_view v) {
  std::vector<std::size_t> out;
  if (v.empty()) return out;
  for (auto part : split(v, ',')) out.push_back(parse_u64(part));
  return out;
}

std::string fmt(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& xs, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) out += sep;
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define FT_DOUBLE(name, member) \
  Field { name, [](const RunConfig& c) { return fmt(c.member); }, [](RunConfig& c, std::string_view v) { c.member = parse_double(v); } }
#define FT_SIZE(name, member)                                                   \
  Field {                                                                       \
    name, [](const RunConfig& c) { return std::to_string(c.member); },          \
        [](RunConfig& c, std::string_view v) { c.member = static_cast<std::size_t>(parse_u64(v)); } \
  }
#define FT_SIZES(name, member) \
  Field { name, [](const RunConfig& c) { return join(c.member); }, [](RunConfig& c, std::string_view v) { c.member = parse_sizes(v); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"env.kind", [](const RunConfig& c) { return envs::to_string(c.train.env.kind); },
            [](RunConfig& c, std::string_view v) { c.train.env.kind = envs::parse_env_kind(v); }},
      Field{"env.sigma", [](const RunConfig& c) { return join(c.train.env.sigma); },
            [](RunConfig& c, std::string_view v) { c.train.env.sigma = parse_doubles(v); }},
      Field{"env.modes",
            [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.train.env.modes.size(); ++i) {
                if (i > 0) out += ';';
                out += join(c.train.env.modes[i]);
              }
              return out;
            },
            [](RunConfig& c, std::string_view v) {
              c.train.env.modes.clear();
              if (v.empty()) return;
              for (auto mode : split(v, ';')) c.train.env.modes.push_back(parse_doubles(mode));
            }},
      FT_DOUBLE("env.mode_scale", train.env.mode_scale),
      FT_DOUBLE("env.bandit_bound", train.env.bandit_bound),
      FT_SIZE("env.pm_dim", train.env.pm_dim),
      FT_SIZE("env.horizon", train.env.horizon),
      FT_DOUBLE("env.action_gain", train.env.action_gain),
      FT_DOUBLE("env.noise_scale", train.env.noise_scale),
      FT_DOUBLE("env.action_cost", train.env.action_cost),
      FT_DOUBLE("env.escape_radius", train.env.escape_radius),
      FT_DOUBLE("env.start_bound", train.env.start_bound),
      FT_DOUBLE("env.action_bound", train.env.action_bound),
      Field{"policy.kind", [](const RunConfig& c) { return policies::to_string(c.train.policy); },
            [](RunConfig& c, std::string_view v) { c.train.policy = policies::parse_policy_kind(v); }},
      FT_SIZES("policy.hidden", train.arch.hidden),
      FT_SIZE("policy.gmm_components", train.arch.gmm_components),
      FT_SIZE("policy.flow_layers", train.arch.flow_layers),
      FT_SIZE("policy.flow_hidden", train.arch.flow_hidden),
      FT_SIZE("policy.flow_depth", train.arch.flow_depth),
      FT_SIZES("policy.state_hidden", train.arch.state_hidden),
      FT_DOUBLE("policy.scale_clamp", train.arch.scale_clamp),
      FT_SIZE("policy.inject_after", train.arch.inject_after),
      FT_DOUBLE("trpo.max_kl", train.trpo.max_kl),
      FT_SIZE("trpo.cg_iters", train.trpo.cg_iters),
      FT_DOUBLE("trpo.cg_damping", train.trpo.cg_damping),
      FT_DOUBLE("trpo.cg_tol", train.trpo.cg_tol),
      FT_DOUBLE("trpo.hvp_fd_step", train.trpo.hvp_fd_step),
      FT_DOUBLE("trpo.backtrack_ratio", train.trpo.backtrack_ratio),
      FT_SIZE("trpo.max_backtracks", train.trpo.max_backtracks),
      FT_DOUBLE("trpo.entropy_coef", train.trpo.entropy_coef),
      FT_SIZE("trpo.entropy_samples", train.trpo.entropy_samples),
      FT_SIZE("trpo.entropy_states", train.trpo.entropy_states),
      FT_SIZE("trpo.kl_samples", train.trpo.kl_samples),
      FT_SIZE("trpo.fvp_subsample", train.trpo.fvp_subsample),
      Field{"run.seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
            [](RunConfig& c, std::string_view v) { c.train.seed = parse_u64(v); }},
      FT_SIZE("run.batch_size", train.batch_size),
      FT_SIZE("run.total_timesteps", total_timesteps),
      FT_DOUBLE("run.gamma", train.gamma),
      FT_DOUBLE("run.lambda", train.lambda),
      Field{"run.normalize_advantages",
            [](const RunConfig& c) { return std::string(c.train.normalize_advantages ? "true" : "false"); },
            [](RunConfig& c, std::string_view v) { c.train.normalize_advantages = parse_bool(v); }},
      FT_SIZE("run.checkpoint_every", checkpoint_every),
      Field{"run.output_dir", [](const RunConfig& c) { return c.output_dir; },
            [](RunConfig& c, std::string_view v) { c.output_dir = std::string(v); }},
      FT_SIZE("vf.epochs", train.vf_epochs),
      FT_DOUBLE("vf.step_size", train.vf_step_size),
      FT_SIZE("vf.minibatch", train.vf_minibatch),
      FT_SIZES("vf.hidden", train.vf_hidden),
  };
  return table;
}

#undef FT_DOUBLE
#undef FT_SIZE
#undef FT_SIZES

const Field& field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown key '" + std::string(key) + "'");
}

}  // namespace

void validate_config(const RunConfig& cfg) {
  cfg.train.validate();
  envs::Env check(cfg.train.env);
  if (cfg.total_timesteps == 0) throw ConfigError("run.total_timesteps must be positive");
  if (cfg.output_dir.empty()) throw ConfigError("run.output_dir must not be empty");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> keys{"env.kind", "policy.kind"};
  return keys;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const Field& f = field(key);
  try {
    f.set(cfg, trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  set_config_value(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

RunConfig parse_config(std::string_view text, std::string_view source) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  auto where = [&] { return std::string(source) + ":" + std::to_string(line_no) + ": "; };
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where() + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (seen.contains(key)) throw ConfigError(where() + "duplicate key '" + std::string(key) + "'");
    try {
      set_config_value(cfg, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where() + e.what());
    }
    seen.emplace(key);
  }
  for (const auto& key : required_config_keys()) {
    if (!seen.contains(key)) throw ConfigError(std::string(source) + ": missing required key '" + key + "'");
  }
  try {
    validate_config(cfg);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  return cfg;
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace flowtrpo::cli
