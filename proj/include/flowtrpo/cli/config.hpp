#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "flowtrpo/trpo/trainer.hpp"

namespace flowtrpo::cli {

/// A complete training run: settings plus length and output location.
struct RunConfig {
  trpo::TrainSettings train;
  std::size_t total_timesteps = 100000;
  /// Write a checkpoint every this many iterations (0 = only at the end).
  std::size_t checkpoint_every = 10;
  std::string output_dir = "run";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Every recognized key, in file order.
const std::vector<std::string>& config_keys();

/// Keys that must appear in a config file.
const std::vector<std::string>& required_config_keys();

/// Parses "key = value" lines; '#' starts a comment. Unknown, duplicate or
/// malformed keys throw ConfigError naming `source` and the line number.
RunConfig parse_config(std::string_view text, std::string_view source = "config");

/// Throws ConfigError if the settings are inconsistent.
void validate_config(const RunConfig& cfg);

/// Applies one "key=value" override on top of `cfg`; call validate_config afterwards.
void apply_override(RunConfig& cfg, std::string_view assignment);

/// Sets one key from its textual value.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);

RunConfig load_config_file(const std::string& path);

}  // namespace flowtrpo::cli
