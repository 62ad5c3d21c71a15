#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ltraj/calibration.hpp"
#include "ltraj/report.hpp"
#include "ltraj/synth.hpp"

namespace ltraj {

inline constexpr std::uint64_t kDefaultCheckpointTokens = 2000;
inline constexpr std::uint64_t kDefaultCheckpointStride = 500;
inline constexpr std::uint64_t kDefaultMaxTokens = 31768;
inline constexpr std::size_t kDefaultControlShuffles = 100;

/// Everything a subcommand reads. Loadable from a JSON object whose keys are
/// the field names below; command-line flags override the file.
struct RunConfig {
  std::string command;
  std::filesystem::path manifest;
  std::filesystem::path calibration;
  /// Empty writes to stdout.
  std::filesystem::path output;
  std::uint32_t segment_size = kDefaultSegmentSize;
  std::uint64_t checkpoint_stride = kDefaultCheckpointStride;
  std::uint64_t checkpoint_tokens = kDefaultCheckpointTokens;
  std::size_t k = kDefaultSampleBudget;
  std::uint64_t max_tokens = kDefaultMaxTokens;
  std::uint64_t seed = 0;
  std::vector<Metric> metrics{kSampleMetrics.begin(), kSampleMetrics.end()};
  OutputFormat format = OutputFormat::json_lines;
  std::size_t workers = 0;

  /// signals: also emit Net/Cumulative at every checkpoint_stride tokens.
  bool partial = false;
  /// evaluate: per-class five-number summaries.
  bool quartiles = false;
  /// evaluate: aggregate a precomputed AUC/correlation table instead of traces.
  std::filesystem::path auc_table;
  /// early-path: label shuffles averaged into the permutation control.
  std::size_t control_shuffles = kDefaultControlShuffles;

  SynthConfig synth;
  std::filesystem::path out_dir;

  /// Overlays the keys present in a JSON object; unknown keys are an error.
  void merge_json(const std::string& text);
  void validate() const;
};

struct CommandResult {
  std::vector<Table> tables;
  /// Set by calibrate: the artifact written instead of tables.
  std::optional<std::string> document;
  /// Progress notes for stderr.
  std::vector<std::string> log;
  std::size_t error_rows = 0;

  int exit_code() const noexcept { return error_rows == 0 ? 0 : 1; }
  std::string render(OutputFormat format) const;
};

CommandResult cmd_signals(const RunConfig& config);
CommandResult cmd_evaluate(const RunConfig& config);
CommandResult cmd_calibrate(const RunConfig& config);
CommandResult cmd_simulate(const RunConfig& config);
CommandResult cmd_early_path(const RunConfig& config);
CommandResult cmd_synth(const RunConfig& config);
CommandResult cmd_validate(const RunConfig& config);
/// Dispatches on config.command.
CommandResult run_command(const RunConfig& config);

// --- pieces shared by the commands and the tests ---------------------------

struct AucTableEntry {
  std::string model;
  std::string dataset;
  Metric metric;
  double auc;
  double corr;
};

/// JSON lines with keys model, dataset, metric, auc, corr.
std::vector<AucTableEntry> load_auc_table(const std::filesystem::path& source);

struct RuleSimulation {
  RuleCalibration calibration;
  /// Empty when the rule was skipped at calibration or failed here.
  std::vector<SelectionOutcome> outcomes;
  std::string error;
};

/// Per-method outcomes of one fold's test problems.
struct FoldSimulation {
  std::vector<SelectionOutcome> majority_vote;
  std::vector<SelectionOutcome> shortest;
  /// Requested metrics in order, then the combined rule if calibrated.
  std::vector<RuleSimulation> rules;
};

/// Replays every rule of `fold` on its test problems.
FoldSimulation simulate_fold(const SignalTable& table, const FoldCalibration& fold, std::size_t k,
                             const std::vector<Metric>& metrics);

}  // namespace ltraj
