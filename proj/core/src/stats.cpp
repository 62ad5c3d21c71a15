#include "ltraj/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltraj/error.hpp"

namespace ltraj {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (const double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, std::string(what) + " contains a non-finite value");
  }
}

std::vector<double> sorted_copy(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return v;
}

double interpolate_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    // ranks i+1 .. j share their mean
    const double shared = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = shared;
    i = j;
  }
  return ranks;
}

double roc_auc(const LabeledScores& data) {
  if (data.scores.size() != data.labels.size()) throw Error(ErrorCode::invariant, "scores and labels differ in length");
  if (data.scores.size() < 2) throw Error(ErrorCode::invariant, "need at least 2 scored samples");
  require_finite(data.scores, "scores");
  std::vector<double> oriented(data.scores);
  if (data.orientation == Orientation::lower_is_better) {
    for (double& s : oriented) s = -s;
  }
  const auto ranks = average_ranks(oriented);
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (data.labels[i]) {
      positive_rank_sum += ranks[i];
      ++positives;
    }
  }
  const std::size_t negatives = ranks.size() - positives;
  if (positives == 0 || negatives == 0) throw Error(ErrorCode::single_class, "AUC needs both classes");
  const double P = static_cast<double>(positives);
  // Rank sums are exact half-integers, so the numerator equals the pairwise
  // win count (ties as 0.5) exactly.
  const double wins = positive_rank_sum - P * (P + 1.0) / 2.0;
  return wins / (P * static_cast<double>(negatives));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::invariant, "pearson needs equal lengths >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error(ErrorCode::degenerate, "zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) throw Error(ErrorCode::invariant, "spearman needs equal lengths >= 3");
  require_finite(x, "x");
  require_finite(y, "y");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  try {
    return pearson(rx, ry);
  } catch (const Error&) {
    throw Error(ErrorCode::degenerate, "spearman: zero rank variance");
  }
}

AggregateSummary aggregate(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::invariant, "aggregate of an empty list");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n), values.size()};
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::invariant, "percentile of an empty list");
  if (!(p >= 0.0 && p <= 100.0)) throw Error(ErrorCode::out_of_range, "percentile outside [0, 100]");
  return interpolate_sorted(sorted_copy(values), p);
}

double median(std::span<const double> values) { return percentile(values, 50.0); }

FiveNumberSummary five_number_summary(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::invariant, "summary of an empty class");
  const auto s = sorted_copy(values);
  return {s.front(), interpolate_sorted(s, 25.0), interpolate_sorted(s, 50.0), interpolate_sorted(s, 75.0), s.back(),
          s.size()};
}

GroupDistribution group_distribution(const LabeledScores& data) {
  if (data.scores.size() != data.labels.size()) throw Error(ErrorCode::invariant, "scores and labels differ in length");
  std::vector<double> correct, incorrect;
  for (std::size_t i = 0; i < data.scores.size(); ++i) (data.labels[i] ? correct : incorrect).push_back(data.scores[i]);
  if (correct.empty() || incorrect.empty()) throw Error(ErrorCode::single_class, "group distribution needs both classes");
  return {five_number_summary(correct), five_number_summary(incorrect)};
}

}  // namespace ltraj
