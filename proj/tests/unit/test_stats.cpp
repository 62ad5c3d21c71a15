#include <gtest/gtest.h>

#include <fstream>

#include "ltraj/commands.hpp"
#include "ltraj/error.hpp"
#include "ltraj/stats.hpp"
#include "support.hpp"

using namespace ltraj;
using namespace ltraj::testing;

TEST(Auc, TrivialCases) {
  EXPECT_EQ(roc_auc({{0.9, 0.1}, {true, false}}), 1.0);
  EXPECT_EQ(roc_auc({{0.3, 0.3, 0.3, 0.3}, {true, false, true, false}}), 0.5);
  EXPECT_EQ(roc_auc({{0.9, 0.1}, {true, false}, Orientation::lower_is_better}), 0.0);
}

TEST(Auc, SingleClassIsError) {
  try {
    roc_auc({{1, 2, 3}, {true, true, true}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::single_class);
  }
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  Rng rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    LabeledScores d;
    for (int i = 0; i < 100; ++i) {
      // coarse grid forces many ties
      d.scores.push_back(rep % 2 ? static_cast<double>(rng.below(10)) : rng.normal());
      d.labels.push_back(rng.bernoulli(0.4));
    }
    d.labels[0] = true;
    d.labels[1] = false;
    EXPECT_EQ(roc_auc(d), oracle_auc(d.scores, d.labels));
  }
}

TEST(Spearman, Monotone) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  EXPECT_NEAR(spearman(x, std::vector<double>{2, 4, 8, 16, 32}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, std::vector<double>{-1, -2, -3, -4, -5}), -1.0, 1e-15);
}

TEST(Spearman, Errors) {
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
  EXPECT_THROW(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), Error);
}

TEST(Spearman, MatchesNaiveOracleWithTies) {
  Rng rng(22);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> x, y;
    for (int i = 0; i < 40; ++i) {
      x.push_back(static_cast<double>(rng.below(8)));
      y.push_back(static_cast<double>(rng.below(5)) + 0.1 * x.back());
    }
    EXPECT_NEAR(spearman(x, y), oracle_spearman(x, y), 1e-12);
  }
}

TEST(Aggregate, SingleValueAndEmpty) {
  const auto a = aggregate(std::vector<double>{0.3});
  EXPECT_EQ(a.mean, 0.3);
  EXPECT_EQ(a.population_std, 0.0);
  EXPECT_EQ(a.count, 1u);
  EXPECT_THROW(aggregate(std::vector<double>{}), Error);
}

TEST(Aggregate, NetChangeColumn) {
  const std::vector<double> net{.688, .757, .641, .744, .755, .625, .671, .921, .637};
  const auto a = aggregate(net);
  EXPECT_NEAR(a.mean, 0.7154, 5e-5);
  EXPECT_NEAR(a.population_std, 0.0875, 5e-5);
  EXPECT_NEAR(a.mean, 0.71, 0.01);
  EXPECT_NEAR(a.population_std, 0.09, 0.005);
}

TEST(Aggregate, AucTableFixture) {
  const auto entries = load_auc_table(std::string(LTRAJ_TEST_DATA) + "/auc_table.jsonl");
  ASSERT_EQ(entries.size(), 72u);
  std::vector<double> net, cum;
  for (const auto& e : entries) {
    if (e.metric == Metric::net_change) net.push_back(e.auc);
    if (e.metric == Metric::cumulative_change) cum.push_back(e.auc);
  }
  ASSERT_EQ(net.size(), 9u);
  EXPECT_NEAR(aggregate(net).mean, 0.7154, 5e-5);
  EXPECT_NEAR(aggregate(net).population_std, 0.0875, 5e-5);
  EXPECT_NEAR(aggregate(cum).mean, 0.7483, 5e-5);
  EXPECT_NEAR(aggregate(cum).mean, 0.74, 0.009);
}

TEST(Percentile, Interpolation) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  EXPECT_DOUBLE_EQ(percentile(v, 50), 50.5);
  EXPECT_DOUBLE_EQ(percentile(v, 0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(v, 100), 100.0);
  EXPECT_DOUBLE_EQ(median(std::vector<double>{3, 1, 2}), 2.0);
  EXPECT_THROW(percentile(std::vector<double>{}, 50), Error);
}

TEST(Distribution, OddCountQuartiles) {
  const auto s = five_number_summary(std::vector<double>{5, 3, 1, 4, 2});
  EXPECT_EQ(s.min, 1);
  EXPECT_EQ(s.q1, 2);
  EXPECT_EQ(s.median, 3);
  EXPECT_EQ(s.q3, 4);
  EXPECT_EQ(s.max, 5);
}

TEST(Distribution, IdenticalValuesGiveDegenerateBox) {
  const auto s = five_number_summary(std::vector<double>{2, 2, 2});
  EXPECT_TRUE(s.min == s.q1 && s.q1 == s.median && s.median == s.q3 && s.q3 == s.max);
}

TEST(Distribution, PerClassMatchesSortOracle) {
  Rng rng(23);
  for (int rep = 0; rep < 50; ++rep) {
    LabeledScores d;
    std::vector<double> pos, neg;
    for (int i = 0; i < 30; ++i) {
      d.scores.push_back(rng.normal());
      d.labels.push_back(i % 3 == 0);
      (i % 3 == 0 ? pos : neg).push_back(d.scores.back());
    }
    const auto g = group_distribution(d);
    EXPECT_EQ(g.correct.q1, oracle_percentile(pos, 25));
    EXPECT_EQ(g.correct.median, oracle_percentile(pos, 50));
    EXPECT_EQ(g.incorrect.q3, oracle_percentile(neg, 75));
    EXPECT_EQ(g.incorrect.max, oracle_percentile(neg, 100));
    EXPECT_EQ(g.correct.count, pos.size());
  }
}

TEST(Distribution, EmptyClassIsError) {
  EXPECT_THROW(group_distribution({{1, 2}, {true, true}}), Error);
}
