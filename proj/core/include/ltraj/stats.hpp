#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ltraj/signals.hpp"

namespace ltraj {

struct LabeledScores {
  std::vector<double> scores;
  std::vector<bool> labels;  // true = correct
  Orientation orientation = Orientation::higher_is_better;
};

/// Mann-Whitney AUC, ties credited one half, computed from average ranks.
/// A lower_is_better population is negated first.
double roc_auc(const LabeledScores& data);

/// Average (1-based) ranks; tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks. Needs >= 3 points and nonzero rank
/// variance in both inputs.
double spearman(std::span<const double> x, std::span<const double> y);

struct AggregateSummary {
  double mean;
  double population_std;
  std::size_t count;
};

AggregateSummary aggregate(std::span<const double> values);

/// Linear interpolation between closest ranks: position p/100 * (n - 1)
/// into the sorted sample.
double percentile(std::span<const double> values, double p);
double median(std::span<const double> values);

struct FiveNumberSummary {
  double min;
  double q1;
  double median;
  double q3;
  double max;
  std::size_t count;
};

struct GroupDistribution {
  FiveNumberSummary correct;
  FiveNumberSummary incorrect;
};

FiveNumberSummary five_number_summary(std::span<const double> values);
GroupDistribution group_distribution(const LabeledScores& data);

}  // namespace ltraj
