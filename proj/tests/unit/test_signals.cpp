#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ltraj/error.hpp"
#include "ltraj/signals.hpp"
#include "ltraj/stats.hpp"
#include "support.hpp"

using namespace ltraj;
using namespace ltraj::testing;

namespace {

// L = 1, d = 2: (0,0) -> (1,0) -> (1,1)
Trace corner() { return segment_trace_of({{{0, 0}}, {{1, 0}}, {{1, 1}}}); }

Trace straight_line(std::size_t n) {
  States s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({{static_cast<double>(i), 2.0 * static_cast<double>(i)}});
  return segment_trace_of(s);
}

void expect_rel(double got, double want, double rel = 1e-9) {
  EXPECT_LE(std::abs(got - want), rel * std::max(1.0, std::abs(want))) << got << " vs " << want;
}

}  // namespace

TEST(Signals, DriftAndUpdatesByHand) {
  const auto t = corner();
  EXPECT_EQ(drift_vector(t, 0), (std::vector<double>{1, 1}));
  const auto u = update_vectors(t, 0);
  ASSERT_EQ(u.size(), 2u);
  EXPECT_EQ(u[0], (std::vector<double>{1, 0}));
  EXPECT_EQ(u[1], (std::vector<double>{0, 1}));
  EXPECT_THROW(drift_vector(t, 1), Error);
}

TEST(Signals, HandValues) {
  const auto t = corner();
  EXPECT_NEAR(net_change(t).value, std::sqrt(2.0) / 3.0, 1e-12);
  EXPECT_NEAR(cumulative_change(t).value, 2.0, 1e-12);
  EXPECT_NEAR(aligned_change(t).value, 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_EQ(net_change(t).segments_used, 3u);
}

TEST(Signals, ConstantSegments) {
  const auto t = segment_trace_of({{{2, 2}}, {{2, 2}}, {{2, 2}}});
  EXPECT_EQ(net_change(t).value, 0.0);
  EXPECT_EQ(cumulative_change(t).value, 0.0);
  for (const auto& v : update_vectors(t, 0)) EXPECT_EQ(v, (std::vector<double>{0, 0}));
  try {
    aligned_change(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate);
  }
}

TEST(Signals, TwoSegmentsAlignExactly) {
  Rng rng(11);
  const auto t = segment_trace_of(random_states(rng, 2, 3, 5));
  EXPECT_NEAR(aligned_change(t).value, 1.0, 1e-12);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(update_vectors(t, l)[0], drift_vector(t, l));
}

TEST(Signals, StraightLine) {
  for (const std::size_t n : {2u, 3u, 7u, 12u}) {
    const auto t = straight_line(n);
    EXPECT_NEAR(aligned_change(t).value, 1.0, 1e-12);
    expect_rel(cumulative_change(t).value, static_cast<double>(n) * net_change(t).value);
  }
}

TEST(Signals, ScalingByThree) {
  Rng rng(12);
  auto s = random_states(rng, 6, 2, 4);
  const auto base = segment_trace_of(s);
  for (auto& pos : s)
    for (auto& layer : pos)
      for (auto& x : layer) x *= 3.0;
  const auto scaled = segment_trace_of(s);
  expect_rel(net_change(scaled).value, 3.0 * net_change(base).value, 1e-6);
}

TEST(Signals, TelescopingAgainstFloatStorage) {
  Rng rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const auto t = segment_trace_of(random_states(rng, 2 + rng.below(10), 1 + rng.below(4), 1 + rng.below(16)));
    for (std::size_t l = 0; l < t.layers(); ++l) {
      const auto drift = drift_vector(t, l);
      std::vector<double> sum(drift.size(), 0.0);
      for (const auto& v : update_vectors(t, l))
        for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
      for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(sum[i], drift[i], 1e-6);
    }
  }
}

TEST(Signals, AlignedSkipsZeroUpdates) {
  // a repeated state contributes a zero update that must not dilute the mean
  const auto t = segment_trace_of({{{0, 0}}, {{1, 0}}, {{1, 0}}, {{2, 0}}});
  EXPECT_NEAR(aligned_change(t).value, 1.0, 1e-12);
}

TEST(Signals, LayerBaselinesByHand) {
  const auto mag = segment_trace_of({{{0, 0}, {1, 0}, {2, 0}}, {{0, 0}, {1, 0}, {2, 0}}});
  EXPECT_NEAR(layer_magnitude(mag).value, 1.0 / 3.0, 1e-12);
  const auto ang = segment_trace_of({{{1, 0}, {1, 1}, {0, 1}}, {{1, 0}, {1, 1}, {0, 1}}});
  EXPECT_NEAR(layer_angle(ang).value, 1.0 / 3.0, 1e-12);
}

TEST(Signals, LayerAngleDegenerateWhenDirectionsMatch) {
  const auto t = segment_trace_of({{{1, 0}, {2, 0}, {3, 0}}, {{1, 0}, {2, 0}, {3, 0}}});
  EXPECT_THROW(layer_angle(t), Error);
}

TEST(Signals, OracleEquivalenceOnRandomTraces) {
  Rng rng(14);
  for (int rep = 0; rep < 200; ++rep) {
    const auto t = segment_trace_of(random_states(rng, 2 + rng.below(11), 2 + rng.below(3), 1 + rng.below(16)));
    const auto s = states_of(t);
    expect_rel(net_change(t).value, oracle_net(s));
    expect_rel(cumulative_change(t).value, oracle_cumulative(s));
    expect_rel(aligned_change(t).value, oracle_aligned(s));
    expect_rel(layer_magnitude(t).value, oracle_layer_magnitude(s));
    // d = 1 can leave every segment with collinear endpoint layers
    const double angle = oracle_layer_angle(s);
    if (std::isnan(angle)) {
      EXPECT_THROW(layer_angle(t), Error);
    } else {
      expect_rel(layer_angle(t).value, angle);
    }
  }
}

TEST(Signals, LayerVectorsMatchScalar) {
  Rng rng(15);
  const auto t = segment_trace_of(random_states(rng, 5, 3, 4));
  for (const auto& v : {net_change_layers(t), cumulative_change_layers(t), aligned_change_layers(t)}) {
    ASSERT_EQ(v.per_layer.size(), 3u);
    double mean = 0.0;
    for (const double x : v.per_layer) mean += x / 3.0;
    EXPECT_NEAR(v.layer_mean, mean, 1e-12);
  }
  for (const double x : aligned_change_layers(t).per_layer) {
    EXPECT_GE(x, -1.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(OutputBaselines, HandValues) {
  EXPECT_NEAR(output_margin(AnswerLogitSummary({2.0, 0.5})), 1.5, 1e-12);
  EXPECT_EQ(output_margin(AnswerLogitSummary({1.25, 1.25})), 0.0);
  EXPECT_NEAR(output_entropy(AnswerLogitSummary({1.0, 1.0})), std::log(2.0), 1e-12);
  EXPECT_NEAR(output_perplexity(AnswerLogitSummary({1.0, 1.0})), 2.0, 1e-12);
  EXPECT_NEAR(output_perplexity(AnswerLogitSummary({std::log(3.0), 0.0, 0.0})), 5.0 / 3.0, 1e-12);
}

TEST(OutputBaselines, DominantLogitLimit) {
  const AnswerLogitSummary s({50.0, 0.0});
  EXPECT_NEAR(output_entropy(s), 0.0, 1e-9);
  EXPECT_NEAR(output_perplexity(s), 1.0, 1e-9);
}

TEST(OutputBaselines, RejectsBadInput) {
  EXPECT_THROW(AnswerLogitSummary({1.0}), Error);
  EXPECT_THROW(AnswerLogitSummary({0.5, 2.0}), Error);
  EXPECT_THROW(AnswerLogitSummary({2.0, 0.5}, 1.0), Error);
}

TEST(OutputBaselines, EntropyOracle) {
  Rng rng(16);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> logits(10);
    for (auto& x : logits) x = 3.0 * rng.normal();
    std::sort(logits.rbegin(), logits.rend());
    const double tail = rep % 2 ? 0.3 * rng.uniform() : 0.0;
    const AnswerLogitSummary s(logits, rep % 2 ? std::optional<double>(tail) : std::nullopt);
    EXPECT_NEAR(output_entropy(s), oracle_entropy(logits, tail), 1e-12);
    double mass = 0.0;
    for (const double p : s.probabilities()) mass += p;
    EXPECT_NEAR(mass, 1.0 - tail, 1e-12);
  }
}

TEST(Combined, WeightValidation) {
  WeightVector w;
  w.weights = {0.35, 0.40, 0.25};
  EXPECT_NO_THROW(w.validate());
  w.weights = {0.5, 0.6, 0.0};
  EXPECT_THROW(w.validate(), Error);
  w.weights = {1.2, -0.2, 0.0};
  EXPECT_THROW(w.validate(), Error);
}

TEST(Combined, NetOnlyWeightsRankLikeNet) {
  Rng rng(17);
  WeightVector w;
  w.weights = {1.0, 0.0, 0.0};
  w.stats = {Standardization{1.0, 2.0}, Standardization{5.0, 3.0}, Standardization{0.2, 0.5}};
  std::vector<double> net, comb;
  for (int i = 0; i < 50; ++i) {
    const double n = rng.normal();
    net.push_back(n);
    comb.push_back(combined_score({{Metric::net_change, n},
                                   {Metric::cumulative_change, rng.normal()},
                                   {Metric::aligned_change, rng.normal()}},
                                  w));
  }
  EXPECT_NEAR(spearman(net, comb), 1.0, 1e-12);
}

TEST(Combined, MatchesFormula) {
  Rng rng(18);
  for (int rep = 0; rep < 100; ++rep) {
    WeightVector w;
    const double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
    w.weights = {a / (a + b + c), b / (a + b + c), c / (a + b + c)};
    for (auto& s : w.stats) s = Standardization{rng.normal(), 0.1 + rng.uniform()};
    const double n = rng.normal(), cu = rng.normal(), al = rng.normal();
    const double want = w.weights[0] * (n - w.stats[0].mean) / w.stats[0].stddev -
                        w.weights[1] * (cu - w.stats[1].mean) / w.stats[1].stddev +
                        w.weights[2] * (al - w.stats[2].mean) / w.stats[2].stddev;
    EXPECT_NEAR(combined_score({{Metric::net_change, n}, {Metric::cumulative_change, cu}, {Metric::aligned_change, al}}, w),
                want, 1e-12);
  }
}

TEST(Combined, MissingMetricRejected) {
  EXPECT_THROW(combined_score({{Metric::net_change, 1.0}}, WeightVector{}), Error);
}

TEST(Partial, CheckpointsSkipSingleSegment) {
  Rng rng(19);
  const auto t = token_trace_of(random_states(rng, 1600, 2, 3));
  const auto cps = partial_signals(t, 500);
  ASSERT_EQ(cps.size(), 3u);
  EXPECT_EQ(cps[0].checkpoint_tokens, 1000u);
  EXPECT_EQ(cps[1].checkpoint_tokens, 1500u);
  EXPECT_EQ(cps[2].checkpoint_tokens, 1600u);
  EXPECT_TRUE(cps[2].full_length);
  EXPECT_FALSE(cps[0].full_length);
  EXPECT_EQ(cps[0].scores.size(), 2u);
  EXPECT_EQ(cps[2].scores.size(), 3u);

  const auto seg = segment_trace(t);
  EXPECT_EQ(cps[2].scores[0].value, net_change(seg).value);
  EXPECT_EQ(cps[2].scores[1].value, cumulative_change(seg).value);
  EXPECT_EQ(cps[2].scores[2].value, aligned_change(seg).value);
}

TEST(Partial, MonotoneTraceHandValues) {
  // token j sits at j on a line: segment means are 249.5 + 500 n, so each
  // checkpoint with N segments has drift 500 (N - 1) and Net 500 (N - 1) / N
  States s;
  for (int j = 0; j < 3000; ++j) s.push_back({{static_cast<double>(j)}});
  const auto cps = partial_signals(token_trace_of(s), 500);
  ASSERT_EQ(cps.size(), 5u);
  for (const auto& cp : cps) {
    const double n = static_cast<double>(cp.checkpoint_tokens / 500);
    EXPECT_NEAR(cp.scores[0].value, 500.0 * (n - 1.0) / n, 1e-9);
    EXPECT_NEAR(cp.scores[1].value, 500.0 * (n - 1.0), 1e-9);
  }
}

TEST(Metrics, NamesAndOrientation) {
  for (const auto m : kSampleMetrics) EXPECT_EQ(parse_metric(metric_name(m)), m);
  EXPECT_FALSE(parse_metric("nope"));
  for (const auto m : kSampleMetrics) {
    EXPECT_EQ(orientation(m) == Orientation::lower_is_better, m == Metric::cumulative_change);
  }
}
