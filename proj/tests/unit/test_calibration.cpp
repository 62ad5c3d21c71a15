#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <set>

#include "ltraj/calibration.hpp"
#include "ltraj/error.hpp"
#include "ltraj/stats.hpp"
#include "support.hpp"

using namespace ltraj;
using namespace ltraj::testing;

namespace {

std::string pid(std::size_t i) { return "p" + std::to_string(1000 + i); }

// Net is informative, cumulative mildly so (reversed), aligned is noise.
SignalTable random_table(Rng& rng, std::size_t problems, std::size_t spp = 5, double accuracy = 0.55) {
  SignalTable t;
  for (std::size_t i = 0; i < problems; ++i) {
    ProblemSignals p{pid(i), "m", {}};
    for (std::size_t j = 0; j < spp; ++j) {
      SampleSignals s;
      s.sample_id = "s" + std::to_string(j);
      const bool c = rng.bernoulli(accuracy);
      s.label = c;
      s.answer = c ? "right" : "w" + std::to_string(rng.below(3));
      s.tokens = 1000 + rng.below(9000);
      s.set(Metric::net_change, (c ? 1.0 : 0.0) + rng.normal());
      s.set(Metric::cumulative_change, (c ? -0.5 : 0.0) + rng.normal());
      s.set(Metric::aligned_change, rng.normal());
      for (const auto m : {Metric::layer_magnitude, Metric::layer_angle, Metric::logit_margin, Metric::entropy,
                           Metric::perplexity}) {
        s.set(m, rng.normal());
      }
      p.samples.push_back(std::move(s));
    }
    t.push_back(std::move(p));
  }
  return t;
}

std::vector<ScriptedSample> script(const ProblemSignals& p, Metric m) {
  std::vector<ScriptedSample> out;
  for (const auto& s : p.samples) out.push_back({s.answer, *s.label, s.tokens, *s.value(m)});
  return out;
}

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(pid(i));
  return v;
}

}  // namespace

TEST(Folds, SplitsThirtySeventy) {
  const auto plan = make_folds(ids(100), 7);
  ASSERT_EQ(plan.folds.size(), 3u);
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.calibration.size(), 30u);
    EXPECT_EQ(f.test.size(), 70u);
    std::set<std::string> all(f.calibration.begin(), f.calibration.end());
    all.insert(f.test.begin(), f.test.end());
    EXPECT_EQ(all.size(), 100u);
    EXPECT_TRUE(std::is_sorted(f.calibration.begin(), f.calibration.end()));
  }
  EXPECT_NE(plan.folds[0], plan.folds[1]);
}

TEST(Folds, DeterministicAndSeedSensitive) {
  EXPECT_EQ(make_folds(ids(50), 3), make_folds(ids(50), 3));
  std::set<std::vector<std::string>> seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed) seen.insert(make_folds(ids(50), seed).folds[0].calibration);
  EXPECT_EQ(seen.size(), 20u);
}

TEST(Folds, TooFewProblems) {
  try {
    make_folds(ids(9), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::too_few_problems);
  }
}

TEST(Grid, PercentilesOfIncorrect) {
  std::vector<double> inc;
  for (int i = 1; i <= 100; ++i) inc.push_back(i);
  const auto g = candidate_thresholds(inc, inc);
  EXPECT_FALSE(g.fallback);
  ASSERT_EQ(g.cutoffs.size(), 80u);
  EXPECT_DOUBLE_EQ(g.cutoffs[30], 50.5);
  for (int p = 20; p <= 99; ++p) EXPECT_DOUBLE_EQ(g.cutoffs[static_cast<std::size_t>(p - 20)], oracle_percentile(inc, p));
}

TEST(Grid, MedianFallbackBelowFifteenIncorrect) {
  std::vector<double> inc, all;
  for (int i = 0; i < 14; ++i) inc.push_back(i);
  for (int i = 0; i < 41; ++i) all.push_back(i * 0.5);
  const auto g = candidate_thresholds(inc, all);
  EXPECT_TRUE(g.fallback);
  EXPECT_EQ(g.incorrect_count, 14u);
  ASSERT_EQ(g.cutoffs.size(), 1u);
  EXPECT_DOUBLE_EQ(g.cutoffs[0], 10.0);
  inc.push_back(14);
  EXPECT_FALSE(candidate_thresholds(inc, all).fallback);
}

TEST(SelectThreshold, MeanOfTwoBest) {
  const std::vector<GridPoint> g{{1, 0.8}, {2, 0.9}, {3, 0.9}, {4, 0.7}};
  EXPECT_DOUBLE_EQ(select_threshold(g, Direction::accept_if_geq), 2.5);
  const std::vector<GridPoint> flat{{1, 0.5}, {2, 0.5}, {3, 0.5}};
  EXPECT_DOUBLE_EQ(select_threshold(flat, Direction::accept_if_geq), 2.5);
  EXPECT_DOUBLE_EQ(select_threshold(flat, Direction::accept_if_leq), 1.5);
  EXPECT_DOUBLE_EQ(select_threshold(std::vector<GridPoint>{{7, 0.1}}, Direction::accept_if_geq), 7.0);
}

TEST(SimulateRule, DegenerateCutoffs) {
  Rng rng(51);
  const auto t = random_table(rng, 40);
  const double inf = std::numeric_limits<double>::infinity();
  double mv = 0.0, first = 0.0;
  for (const auto& p : t) {
    mv += scripted_majority(script(p, Metric::net_change), 5).correct ? 1.0 : 0.0;
    first += *p.samples[0].label ? 1.0 : 0.0;
  }
  EXPECT_DOUBLE_EQ(simulate_rule(t, {Metric::net_change, Direction::accept_if_geq, inf}), mv / 40.0);
  EXPECT_DOUBLE_EQ(simulate_rule(t, {Metric::net_change, Direction::accept_if_geq, -inf}), first / 40.0);
}

TEST(SimulateRule, MatchesScriptedReplay) {
  Rng rng(52);
  for (int rep = 0; rep < 30; ++rep) {
    const auto t = random_table(rng, 10);
    const double cut = rng.normal();
    const bool leq = rep % 2 == 1;
    const Metric m = leq ? Metric::cumulative_change : Metric::net_change;
    double hits = 0.0;
    for (const auto& p : t) hits += scripted_sequential(script(p, m), cut, leq, 5).correct ? 1.0 : 0.0;
    EXPECT_DOUBLE_EQ(simulate_rule(t, {m, leq ? Direction::accept_if_leq : Direction::accept_if_geq, cut}),
                     hits / 10.0);
  }
}

TEST(CombinedWeights, SumToOneAndFollowCorrelation) {
  Rng rng(53);
  const auto w = fit_combined_weights(random_table(rng, 200));
  EXPECT_NO_THROW(w.validate());
  EXPECT_GT(w.weights[0], w.weights[1]);
  EXPECT_GT(w.weights[1], w.weights[2]);
}

TEST(CombinedWeights, NetOnlySlice) {
  Rng rng(54);
  auto t = random_table(rng, 30);
  for (auto& p : t) {
    for (auto& s : p.samples) {
      s.set(Metric::cumulative_change, 2.0);
      s.set(Metric::aligned_change, 0.5);
    }
  }
  const auto w = fit_combined_weights(t);
  EXPECT_EQ(w.weights[0], 1.0);
  EXPECT_EQ(w.weights[1], 0.0);
  EXPECT_EQ(w.weights[2], 0.0);
  EXPECT_EQ(w.stats[1].stddev, 0.0);
  const auto scored = with_combined(t, w);
  std::vector<double> net, comb;
  for (const auto& p : scored) {
    for (const auto& s : p.samples) {
      net.push_back(*s.value(Metric::net_change));
      comb.push_back(*s.value(Metric::combined));
    }
  }
  EXPECT_NEAR(spearman(net, comb), 1.0, 1e-12);
}

TEST(Calibrate, DeterministicAndRoundTrips) {
  Rng rng(55);
  const auto t = random_table(rng, 120);
  CalibrationOptions opt;
  opt.seed = 4;
  const auto a = calibrate(t, opt);
  const auto b = calibrate(t, opt);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.to_json(), b.to_json());
  ASSERT_EQ(a.folds.size(), 3u);
  const auto back = CalibrationArtifact::from_json(a.to_json());
  EXPECT_EQ(back, a);
  EXPECT_EQ(back.to_json(), a.to_json());
  for (const auto& f : a.folds) {
    ASSERT_NE(f.find(Metric::net_change), nullptr);
    EXPECT_TRUE(f.find(Metric::net_change)->cutoff);
    EXPECT_EQ(f.find(Metric::cumulative_change)->direction, Direction::accept_if_leq);
    ASSERT_TRUE(f.combined.weights);
    EXPECT_EQ(f.combined.slice_problems.size(), 12u);  // a third of 36
  }
}

TEST(Calibrate, TestProblemsCannotLeak) {
  Rng rng(56);
  const auto t = random_table(rng, 90);
  CalibrationOptions opt;
  opt.seed = 8;
  const auto plan = make_folds(t, opt.seed);
  const auto full = calibrate(t, plan, opt);
  EXPECT_EQ(full, calibrate(t, opt));

  std::set<std::string> keep;
  for (const auto& f : plan.folds) keep.insert(f.calibration.begin(), f.calibration.end());
  const auto trimmed = select_problems(t, {keep.begin(), keep.end()});
  ASSERT_LT(trimmed.size(), t.size());
  EXPECT_EQ(calibrate(trimmed, plan, opt), full);

  // scrambling a fold's test problems leaves that fold untouched
  auto scrambled = t;
  const auto& test = plan.folds[0].test;
  for (auto& p : scrambled) {
    if (std::find(test.begin(), test.end(), p.problem_id) == test.end()) continue;
    for (auto& s : p.samples) {
      s.label = !*s.label;
      s.set(Metric::net_change, 100.0 * rng.normal());
    }
  }
  EXPECT_EQ(calibrate(scrambled, plan, opt).folds[0], full.folds[0]);
}

TEST(Calibrate, MedianFallbackWhenFewIncorrect) {
  Rng rng(57);
  auto t = random_table(rng, 20, 5, 0.97);
  std::size_t incorrect = 0;
  std::vector<double> all;
  for (const auto& p : t) {
    for (const auto& s : p.samples) {
      incorrect += *s.label ? 0 : 1;
      all.push_back(*s.value(Metric::net_change));
    }
  }
  ASSERT_LT(incorrect, 15u);
  ASSERT_GT(incorrect, 0u);
  CalibrationOptions opt;
  opt.combined = false;
  const auto fc = calibrate_fold(t, 0, opt);
  const auto* rc = fc.find(Metric::net_change);
  ASSERT_NE(rc, nullptr);
  EXPECT_TRUE(rc->fallback);
  EXPECT_DOUBLE_EQ(*rc->cutoff, oracle_percentile(all, 50));
}

TEST(Calibrate, MissingValuesSkipMetric) {
  Rng rng(58);
  auto t = random_table(rng, 30);
  t[3].samples[1].values[static_cast<std::size_t>(Metric::entropy)].reset();
  CalibrationOptions opt;
  opt.combined = false;
  const auto fc = calibrate_fold(t, 0, opt);
  EXPECT_FALSE(fc.find(Metric::entropy)->cutoff);
  EXPECT_FALSE(fc.find(Metric::entropy)->skipped.empty());
  EXPECT_TRUE(fc.find(Metric::net_change)->cutoff);
}

TEST(Calibrate, SliceSeedIsPerFold) {
  EXPECT_NE(combined_slice_seed(1, 0), combined_slice_seed(1, 1));
  EXPECT_NE(combined_slice_seed(1, 0), combined_slice_seed(2, 0));
}
