#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ltraj/path_classifier.hpp"
#include "ltraj/policy.hpp"
#include "ltraj/segmenter.hpp"
#include "ltraj/signals.hpp"
#include "ltraj/trace_store.hpp"

namespace ltraj {

inline constexpr std::size_t kMetricCount = static_cast<std::size_t>(Metric::combined) + 1;

/// Every signal of one sampled generation, keyed by Metric.
struct SampleSignals {
  std::string sample_id;
  std::string answer;  // normalized
  std::optional<bool> label;
  std::uint64_t tokens = 0;
  std::array<std::optional<double>, kMetricCount> values{};
  std::size_t segments = 0;
  /// (net, cumulative) at the early-path checkpoint, if requested and reached.
  std::optional<PathFeatures> checkpoint_features;
  /// First failure per metric, reported as error rows.
  std::map<Metric, std::string> errors;
  std::string trace_error;

  std::optional<double> value(Metric m) const { return values[static_cast<std::size_t>(m)]; }
  void set(Metric m, double v) { values[static_cast<std::size_t>(m)] = v; }
  Candidate candidate(Metric m) const { return Candidate{answer, label, tokens, value(m)}; }
  PathFeatures full_features() const;
};

struct ProblemSignals {
  std::string problem_id;
  std::string model_id;
  std::vector<SampleSignals> samples;

  std::vector<Candidate> candidates(Metric m) const;
};

using SignalTable = std::vector<ProblemSignals>;

struct SignalOptions {
  SegmentationConfig segmentation{};
  /// When set, also computes (net, cumulative) at this many tokens.
  std::optional<std::uint64_t> checkpoint_tokens;
  /// 0 = LTRAJ_WORKERS or hardware concurrency.
  std::size_t workers = 0;
};

/// Signals of one trace + record. Never throws for per-trace failures; they
/// land in `trace_error` / `errors`.
SampleSignals compute_sample_signals(const SampleRecord& record, const std::filesystem::path& trace_location,
                                     const SignalOptions& options);

/// Reads every trace and computes all per-sample signals, parallel across
/// samples with results in dataset order.
SignalTable compute_signal_table(const Dataset& data, const SignalOptions& options);

SignalTable select_problems(const SignalTable& table, const std::vector<std::string>& problem_ids);

}  // namespace ltraj
