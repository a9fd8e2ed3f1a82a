#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowtrpo/analysis/analysis.hpp"
#include "flowtrpo/cli/config.hpp"
#include "flowtrpo/trpo/trainer.hpp"

namespace flowtrpo::cli {

enum ExitCode : int { kExitOk = 0, kExitNumeric = 1, kExitConfig = 2 };

/// Environment variable naming the directory relative output paths resolve against.
inline constexpr const char* kOutputRootEnv = "FLOWTRPO_OUTPUT_ROOT";

std::filesystem::path resolve_output(const std::string& dir);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

struct Checkpoint {
  RunConfig config;
  trpo::TrainerState state;
};

std::string checkpoint_json(const RunConfig& config, const trpo::TrainerState& state);
Checkpoint parse_checkpoint(std::string_view json);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Mean and population standard deviation of the last `window` entries.
struct Summary {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};
Summary tail_summary(const std::vector<double>& xs, std::size_t window = 10);

struct TrainOptions {
  /// Resume from this checkpoint instead of starting fresh.
  std::optional<std::filesystem::path> resume;
  /// Per-iteration progress lines; null for silence.
  std::ostream* progress = nullptr;
};

struct TrainOutcome {
  int exit_code = kExitOk;
  std::size_t iterations = 0;
  Summary final_return;
  std::string error;
  std::filesystem::path output_dir;
};

/// Trains until total_timesteps. Writes config.txt, log.csv, checkpoint.json
/// and report.json under the resolved output directory.
TrainOutcome run_train(const RunConfig& cfg, const TrainOptions& options = {});

struct AblationRow {
  std::size_t layers = 0;
  std::size_t hidden = 0;
  std::uint64_t seed = 0;
  double final_return = 0.0;
  double final_std = 0.0;
  std::string status;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  /// (max - min) / |median| over cells of the seed-averaged final return.
  double spread = 0.0;
};

/// One run per (K, l1, seed) cell. Failed cells are recorded and skipped.
/// Writes ablation.csv under `root` after every cell.
AblationResult run_ablation(const RunConfig& base, const std::vector<std::size_t>& layers,
                            const std::vector<std::size_t>& hidden, const std::vector<std::uint64_t>& seeds,
                            const std::filesystem::path& root, std::ostream* progress = nullptr);

double ablation_spread(const std::vector<AblationRow>& rows);

/// Mean return of `episodes` fresh episodes under the checkpointed policy.
double run_eval(const std::filesystem::path& checkpoint, std::size_t episodes, std::uint64_t seed);

/// Collects one batch with the trainer's preprocessing and writes it as CSV.
void run_dump_batch(const trpo::Trainer& trainer, const std::filesystem::path& out, std::uint64_t seed);

/// Writes samples.csv, grid.csv and report.json under `dir`.
analysis::FitReport run_klball(const analysis::KlBallSpec& spec, std::uint64_t seed, const std::filesystem::path& dir);
analysis::MaxentReport run_maxent(const analysis::MaxentSpec& spec, const std::filesystem::path& dir);

}  // namespace flowtrpo::cli
