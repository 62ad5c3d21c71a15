#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <vector>

#include "ltraj/segmenter.hpp"
#include "ltraj/trace_store.hpp"

namespace ltraj {

/// Guard for every norm used as a cosine or ratio denominator.
inline constexpr double kDegenerateEps = 1e-12;

enum class Metric {
  net_change,
  cumulative_change,
  aligned_change,
  layer_magnitude,
  layer_angle,
  logit_margin,
  entropy,
  perplexity,
  combined,
};

enum class Orientation { higher_is_better, lower_is_better };

inline constexpr std::array kTrajectoryMetrics = {Metric::net_change, Metric::cumulative_change,
                                                  Metric::aligned_change};
inline constexpr std::array kTraceMetrics = {Metric::net_change, Metric::cumulative_change, Metric::aligned_change,
                                             Metric::layer_magnitude, Metric::layer_angle};
inline constexpr std::array kOutputMetrics = {Metric::logit_margin, Metric::entropy, Metric::perplexity};
/// Every per-sample signal, in reporting order.
inline constexpr std::array kSampleMetrics = {Metric::net_change,      Metric::cumulative_change, Metric::aligned_change,
                                              Metric::layer_magnitude, Metric::layer_angle,       Metric::logit_margin,
                                              Metric::entropy,         Metric::perplexity};

std::string_view metric_name(Metric metric) noexcept;
std::optional<Metric> parse_metric(std::string_view name) noexcept;
/// Cumulative Change is the only registered lower-is-better signal.
Orientation orientation(Metric metric) noexcept;

struct LayerSignalVector {
  Metric metric;
  std::vector<double> per_layer;  // NaN marks a layer skipped as degenerate
  double layer_mean;
};

struct SignalScore {
  Metric metric;
  double value;
  std::size_t segments_used;
  std::optional<std::uint64_t> checkpoint_tokens;
};

// --- trajectory primitives -------------------------------------------------
// All take a trace whose positions are segment means (N = positions()).

/// Last-segment minus first-segment state at `layer`.
std::vector<double> drift_vector(const Trace& segments, std::size_t layer);
/// Consecutive differences h(n) - h(n-1), n = 2..N.
std::vector<std::vector<double>> update_vectors(const Trace& segments, std::size_t layer);

LayerSignalVector net_change_layers(const Trace& segments);
LayerSignalVector cumulative_change_layers(const Trace& segments);
/// Update/drift terms with a norm below kDegenerateEps are skipped and the
/// means renormalize; throws Error(degenerate) when every layer is skipped.
LayerSignalVector aligned_change_layers(const Trace& segments);

SignalScore net_change(const Trace& segments);
SignalScore cumulative_change(const Trace& segments);
SignalScore aligned_change(const Trace& segments);

/// Cross-layer baselines. Both keep the 1/L prefactor over the L-1 layer
/// transitions and average over non-degenerate segments.
SignalScore layer_magnitude(const Trace& segments);
SignalScore layer_angle(const Trace& segments);

/// Dispatches one of the five trace metrics.
SignalScore trace_signal(Metric metric, const Trace& segments);

// --- output-distribution baselines -----------------------------------------

/// Descending top-k logits plus optional aggregated tail probability mass.
class AnswerLogitSummary {
 public:
  explicit AnswerLogitSummary(std::vector<double> top_logits, std::optional<double> tail_mass = std::nullopt);
  explicit AnswerLogitSummary(const AnswerLogits& logits)
      : AnswerLogitSummary(logits.logits, logits.tail_mass) {}

  const std::vector<double>& top_logits() const noexcept { return top_logits_; }
  std::optional<double> tail_mass() const noexcept { return tail_mass_; }
  /// Probabilities of the recorded entries; they sum to 1 - tail_mass.
  std::vector<double> probabilities() const;

 private:
  std::vector<double> top_logits_;
  std::optional<double> tail_mass_;
};

double output_margin(const AnswerLogitSummary& logits);
/// Natural-log Shannon entropy; the tail mass counts as one outcome.
double output_entropy(const AnswerLogitSummary& logits);
double output_perplexity(const AnswerLogitSummary& logits);
double output_signal(Metric metric, const AnswerLogitSummary& logits);

// --- combined score ----------------------------------------------------------

struct Standardization {
  double mean = 0.0;
  double stddev = 1.0;

  /// Zero when the population had no spread.
  double apply(double value) const noexcept {
    return stddev > kDegenerateEps ? (value - mean) / stddev : 0.0;
  }
  bool operator==(const Standardization&) const = default;
};

/// Weights over (net, cumulative, aligned) in that order, plus the
/// standardization fitted on the same calibration slice.
struct WeightVector {
  std::array<double, 3> weights{1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::array<Standardization, 3> stats{};

  /// Throws Error(config) unless weights are nonnegative and sum to 1 +- 1e-9.
  void validate() const;
  bool operator==(const WeightVector&) const = default;
};

/// w_net*z(net) - w_cum*z(cum) + w_aln*z(aligned).
double combined_score(const std::map<Metric, double>& scores, const WeightVector& weights);

// --- partial traces ------------------------------------------------------------

struct CheckpointSignals {
  std::uint64_t checkpoint_tokens;
  bool full_length;
  std::vector<SignalScore> scores;  // Net, Cumulative; plus Aligned at full length
};

/// Net and Cumulative Change at every `stride` tokens and at full length.
/// Checkpoints yielding fewer than two segments are omitted.
std::vector<CheckpointSignals> partial_signals(const Trace& trace, std::uint64_t stride,
                                               const SegmentationConfig& config = {});

/// Segment view of any trace: pre-averaged traces with the requested size
/// pass through, everything else goes through segment_trace.
Trace as_segments(const Trace& trace, const SegmentationConfig& config);

}  // namespace ltraj
