#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ltraj/policy.hpp"
#include "ltraj/signal_table.hpp"
#include "ltraj/signals.hpp"

namespace ltraj {

inline constexpr std::size_t kDefaultFolds = 3;
inline constexpr double kDefaultCalibrationFraction = 0.3;
/// Below this many incorrect calibration values the grid collapses to the
/// calibration median.
inline constexpr std::size_t kMinIncorrectForGrid = 15;
inline constexpr int kGridLowPercentile = 20;
inline constexpr int kGridHighPercentile = 99;
inline constexpr std::size_t kMinProblemsForFolds = 10;
/// Share of a fold's calibration problems used to fit combined weights
/// (a third of 30% is the 10% slice).
inline constexpr double kCombinedSliceFraction = 1.0 / 3.0;

struct Fold {
  std::vector<std::string> calibration;
  std::vector<std::string> test;

  bool operator==(const Fold&) const = default;
};

struct FoldPlan {
  std::uint64_t seed = 0;
  std::vector<Fold> folds;

  bool operator==(const FoldPlan&) const = default;
};

/// Independent problem-level shuffles; each fold puts round(fraction * n)
/// problems on the calibration side. Both sides keep input order.
FoldPlan make_folds(std::span<const std::string> problem_ids, std::uint64_t seed, std::size_t folds = kDefaultFolds,
                    double calibration_fraction = kDefaultCalibrationFraction);
FoldPlan make_folds(const SignalTable& table, std::uint64_t seed, std::size_t folds = kDefaultFolds,
                    double calibration_fraction = kDefaultCalibrationFraction);

struct CandidateGrid {
  std::vector<double> cutoffs;
  bool fallback = false;
  std::size_t incorrect_count = 0;
};

/// Percentiles 20..99 of the incorrect values, or the median of
/// `all_values` when fewer than 15 incorrect values exist.
CandidateGrid candidate_thresholds(std::span<const double> incorrect_values, std::span<const double> all_values);

/// Problem accuracy of sequential selection under `rule` over the first k
/// samples of every problem. Needs a label on every sample.
double simulate_rule(const SignalTable& calibration, const ThresholdRule& rule,
                     std::size_t k = kDefaultSampleBudget);

struct GridPoint {
  double cutoff;
  double accuracy;
};

/// Mean of the two best cutoffs; accuracy ties go to the stricter cutoff.
double select_threshold(std::span<const GridPoint> grid, Direction direction);

/// |Pearson| of each trajectory metric (cumulative negated) against the
/// label, normalized to sum to one, plus the slice's standardization.
/// Samples missing any of the three values are ignored.
WeightVector fit_combined_weights(const SignalTable& slice);

/// Copy of `table` with Metric::combined filled wherever net, cumulative and
/// aligned are all present.
SignalTable with_combined(const SignalTable& table, const WeightVector& weights);

struct RuleCalibration {
  Metric metric = Metric::net_change;
  Direction direction = Direction::accept_if_geq;
  /// Unset when the metric could not be calibrated; see `skipped`.
  std::optional<double> cutoff;
  bool fallback = false;
  std::size_t candidates = 0;
  std::size_t incorrect_count = 0;
  std::vector<double> best_cutoffs;
  double calibration_accuracy = 0.0;
  std::string skipped;

  std::optional<ThresholdRule> rule() const;
  bool operator==(const RuleCalibration&) const = default;
};

struct CombinedCalibration {
  std::uint64_t slice_seed = 0;
  std::vector<std::string> slice_problems;
  std::optional<WeightVector> weights;
  std::string skipped;

  bool operator==(const CombinedCalibration&) const = default;
};

struct FoldCalibration {
  std::vector<std::string> calibration_problems;
  std::vector<std::string> test_problems;
  double majority_vote_accuracy = 0.0;
  std::vector<RuleCalibration> rules;
  CombinedCalibration combined;

  const RuleCalibration* find(Metric metric) const;
  bool operator==(const FoldCalibration&) const = default;
};

struct CalibrationOptions {
  std::uint64_t seed = 0;
  std::size_t k = kDefaultSampleBudget;
  std::size_t segment_size = kDefaultSegmentSize;
  std::vector<Metric> metrics{kSampleMetrics.begin(), kSampleMetrics.end()};
  /// Also calibrate the combined score.
  bool combined = true;
  std::size_t folds = kDefaultFolds;
  double calibration_fraction = kDefaultCalibrationFraction;
};

/// Everything calibrated from one fold's calibration problems. Sees nothing
/// else, so test problems cannot leak in.
FoldCalibration calibrate_fold(const SignalTable& calibration, std::size_t fold_index,
                               const CalibrationOptions& options);

struct CalibrationArtifact {
  std::uint64_t seed = 0;
  std::size_t k = kDefaultSampleBudget;
  std::size_t segment_size = kDefaultSegmentSize;
  std::vector<FoldCalibration> folds;

  std::string to_json() const;
  static CalibrationArtifact from_json(const std::string& text);
  bool operator==(const CalibrationArtifact&) const = default;
};

/// Fold plan from options.seed, then calibrate_fold per fold.
CalibrationArtifact calibrate(const SignalTable& table, const CalibrationOptions& options);
/// Same with an explicit plan. Test problems absent from `table` are fine;
/// missing calibration problems are an error.
CalibrationArtifact calibrate(const SignalTable& table, const FoldPlan& plan, const CalibrationOptions& options);

std::uint64_t combined_slice_seed(std::uint64_t seed, std::size_t fold_index) noexcept;

}  // namespace ltraj
