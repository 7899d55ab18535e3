#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "llmref/error.hpp"
#include "llmref/metaeval.hpp"
#include "oracles.hpp"

using namespace llmref;
using namespace llmref::metaeval;

TEST(PairwiseAccuracy, HandCase) {
  const auto r = pairwise_accuracy({{"A", 0.9}, {"B", 0.5}, {"C", 0.7}}, {{"A", 3}, {"B", 2}, {"C", 1}});
  EXPECT_EQ(r.correct, 2u);
  EXPECT_EQ(r.pairs_used, 3u);
  EXPECT_DOUBLE_EQ(r.accuracy, 2.0 / 3.0);
}

TEST(PairwiseAccuracy, PerfectTiesAndErrors) {
  EXPECT_DOUBLE_EQ(pairwise_accuracy({{"A", 3}, {"B", 2}, {"C", 1}}, {{"A", 30}, {"B", 20}, {"C", 10}}).accuracy, 1.0);
  // Human ties are skipped; metric ties count as disagreement.
  const auto r = pairwise_accuracy({{"A", 1}, {"B", 1}, {"C", 0}}, {{"A", 2}, {"B", 1}, {"C", 1}});
  EXPECT_EQ(r.pairs_used, 2u);
  EXPECT_EQ(r.correct, 1u);
  EXPECT_THROW(pairwise_accuracy({{"A", 1}, {"B", 2}}, {{"A", 1}, {"B", 1}}), DegenerateInput);
  EXPECT_THROW(pairwise_accuracy({{"A", 1}}, {{"A", 1}, {"B", 2}}), InvalidArgument);
}

TEST(PairwiseAccuracy, InvariantUnderMonotoneTransform) {
  fixtures::Rng rng(61);
  for (int c = 0; c < 100; ++c) {
    const auto x = fixtures::random_with_ties(rng, 8, 5);
    const auto y = fixtures::random_with_ties(rng, 8, 5);
    std::map<std::string, double> m, h, mt;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m["s" + std::to_string(i)] = x[i];
      mt["s" + std::to_string(i)] = std::exp(3 * x[i]) + 7;
      h["s" + std::to_string(i)] = y[i];
    }
    const auto a = pairwise_agreement_counts(m, h);
    const auto b = pairwise_agreement_counts(mt, h);
    EXPECT_EQ(a.correct, b.correct);
    EXPECT_EQ(a.pairs_used, b.pairs_used);
    if (a.pairs_used > 0) {
      EXPECT_DOUBLE_EQ(pairwise_accuracy(m, m).accuracy, 1.0);
    }
  }
}

TEST(Pearson, Examples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y;
  std::vector<double> neg;
  for (double v : x) {
    y.push_back(2 * v + 1);
    neg.push_back(-v);
  }
  EXPECT_DOUBLE_EQ(pearson(x, y), 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, neg), -1.0);
  EXPECT_THROW(pearson(x, std::vector<double>(5, 1.0)), DegenerateInput);
  EXPECT_THROW(pearson(std::vector<double>{1.0}, std::vector<double>{1.0}), InvalidArgument);
  EXPECT_THROW(pearson(x, std::vector<double>{1, 2}), InvalidArgument);
}

TEST(Pearson, MatchesTextbookOracle) {
  fixtures::Rng rng(67);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> x(10), y(10);
    for (int i = 0; i < 10; ++i) {
      x[i] = g(rng);
      y[i] = 0.5 * x[i] + g(rng);
    }
    EXPECT_NEAR(pearson(x, y), oracle::pearson(x, y), 1e-12);
    std::vector<double> affine;
    for (double v : x) affine.push_back(4 * v - 2);
    EXPECT_NEAR(pearson(affine, y), pearson(x, y), 1e-12);
  }
}

TEST(Kendall, Examples) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(kendall_tau(x, std::vector<double>{10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(kendall_tau(x, std::vector<double>{4, 3, 2, 1}), -1.0);
  const std::vector<double> a{1, 2, 2, 3, 3, 3, 4, 5};
  const std::vector<double> b{2, 1, 3, 3, 2, 5, 5, 4};
  EXPECT_EQ(kendall_tau(a, b), oracle::kendall_tau_b(a, b));
  EXPECT_THROW(kendall_tau(x, std::vector<double>(4, 2.0)), DegenerateInput);
}

TEST(Kendall, MatchesPairOracleWithTies) {
  fixtures::Rng rng(71);
  for (int c = 0; c < 300; ++c) {
    const auto x = fixtures::random_with_ties(rng, 2 + c % 30, 2 + c % 5);
    const auto y = fixtures::random_with_ties(rng, 2 + c % 30, 3);
    const double want = [&] {
      const double v = oracle::kendall_tau_b(x, y);
      return v;
    }();
    if (std::isnan(want)) {
      EXPECT_THROW(kendall_tau(x, y), DegenerateInput);
      continue;
    }
    EXPECT_EQ(kendall_tau(x, y), want);
    std::vector<double> tx;
    for (double v : x) tx.push_back(v * v * v + 2 * v);
    EXPECT_EQ(kendall_tau(tx, y), kendall_tau(x, y));
  }
}

TEST(Spearman, Examples) {
  const std::vector<double> x{-2, -1, 0.5, 1, 3};
  std::vector<double> cube;
  std::vector<double> rev;
  for (double v : x) {
    cube.push_back(v * v * v);
    rev.push_back(-v);
  }
  EXPECT_DOUBLE_EQ(spearman(x, cube), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, rev), -1.0);
  EXPECT_EQ(mid_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  EXPECT_THROW(spearman(x, std::vector<double>(5, 0.0)), DegenerateInput);
}

TEST(Spearman, MatchesRankThenPearsonOracle) {
  fixtures::Rng rng(73);
  for (int c = 0; c < 200; ++c) {
    const auto x = fixtures::random_with_ties(rng, 3 + c % 25, 4);
    const auto y = fixtures::random_with_ties(rng, 3 + c % 25, 5);
    const double want = oracle::spearman(x, y);
    if (std::isnan(want)) {
      EXPECT_THROW(spearman(x, y), DegenerateInput);
      continue;
    }
    EXPECT_NEAR(spearman(x, y), want, 1e-12);
  }
}

TEST(Correlations, SelfCorrelationIsOne) {
  fixtures::Rng rng(79);
  for (int c = 0; c < 50; ++c) {
    auto x = fixtures::random_with_ties(rng, 6, 4);
    x[0] = 100.0;  // never constant
    EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(kendall_tau(x, x), 1.0);
    EXPECT_NEAR(spearman(x, x), 1.0, 1e-15);
  }
}

TEST(SegmentKendall, MatchesPairOracle) {
  const std::map<RowKey, double> metric{{{"A", "1"}, 0.3}, {{"A", "2"}, 0.9}, {{"A", "3"}, 0.5},
                                        {{"B", "1"}, 0.1}, {{"B", "2"}, 0.9}, {{"B", "3"}, 0.2}};
  const std::map<RowKey, double> human{{{"A", "1"}, 2}, {{"A", "2"}, 5}, {{"A", "3"}, 3},
                                       {{"B", "1"}, 1}, {{"B", "2"}, 3}, {{"B", "3"}, 3}, {{"C", "1"}, 0}};
  std::vector<double> x, y;
  for (const auto& [k, v] : metric) {
    x.push_back(v);
    y.push_back(human.at(k));
  }
  EXPECT_EQ(segment_kendall(metric, human), oracle::kendall_tau_b(x, y));
  EXPECT_DOUBLE_EQ(segment_kendall(human, human), 1.0);
  EXPECT_THROW(segment_kendall({{{"Z", "9"}, 1.0}}, human), InvalidArgument);
}

TEST(LeakageGap, TableValues) {
  const auto r = leakage_gap({{"MT-ft-test", 35.86}, {"MT", 27.05}}, {{"MT-ft-test", 53.08}, {"MT", 52.76}},
                             "MT-ft-test", "MT");
  EXPECT_NEAR(r.delta_single, 8.81, 1e-9);
  EXPECT_NEAR(r.delta_multi, 0.32, 1e-9);
  EXPECT_NEAR(r.shrinkage, 0.32 - 8.81, 1e-9);
  ASSERT_TRUE(r.ratio.has_value());
  const auto same = leakage_gap({{"A", 1.0}, {"B", 2.0}}, {{"A", 1.0}, {"B", 2.0}}, "A", "B");
  EXPECT_DOUBLE_EQ(same.delta_single, same.delta_multi);
  EXPECT_THROW(leakage_gap({{"A", 1.0}}, {{"A", 1.0}}, "A", "B"), InvalidArgument);
}

TEST(Evaluate, PerfectAgreementFixture) {
  LanguagePairInput lp{"xx-yy", {}, {}};
  for (int s = 0; s < 4; ++s) {
    const std::string sys = "sys" + std::to_string(s);
    lp.metric.push_back({sys, std::nullopt, std::nullopt, 10.0 * s});
    lp.human.push_back({sys, std::nullopt, std::nullopt, 1.0 * s});
    for (int g = 0; g < 3; ++g) {
      lp.metric.push_back({sys, "g" + std::to_string(g), std::nullopt, 10.0 * s + g});
      lp.human.push_back({sys, "g" + std::to_string(g), std::nullopt, 1.0 * s + 0.1 * g});
      lp.human.push_back({sys, "g" + std::to_string(g), std::string("fluency"), 1.0 * s + 0.1 * g});
    }
  }
  const std::vector<LanguagePairInput> inputs{lp};
  const auto report = evaluate("bleu", inputs);
  ASSERT_TRUE(report.pairwise_accuracy.has_value());
  EXPECT_DOUBLE_EQ(*report.pairwise_accuracy, 1.0);
  EXPECT_EQ(report.n_pairs_used, 6u);
  ASSERT_EQ(report.language_pairs.size(), 1u);
  EXPECT_DOUBLE_EQ(report.language_pairs[0].pearson.value(), 1.0);
  EXPECT_DOUBLE_EQ(report.language_pairs[0].kendall.value(), 1.0);
  EXPECT_NEAR(report.spearman.at("fluency"), 1.0, 1e-12);
}

TEST(Evaluate, PoolsAccuracyAcrossLanguagePairs) {
  const LanguagePairInput a{"a", {{"A", {}, {}, 0.9}, {"B", {}, {}, 0.5}, {"C", {}, {}, 0.7}},
                            {{"A", {}, {}, 3}, {"B", {}, {}, 2}, {"C", {}, {}, 1}}};
  const LanguagePairInput b{"b", {{"A", {}, {}, 1}, {"B", {}, {}, 2}}, {{"A", {}, {}, 1}, {"B", {}, {}, 2}}};
  const std::vector<LanguagePairInput> inputs{a, b};
  const auto report = evaluate("m", inputs);
  EXPECT_EQ(report.n_pairs_used, 4u);
  EXPECT_DOUBLE_EQ(report.pairwise_accuracy.value(), 3.0 / 4.0);
}

TEST(Evaluate, AllTiedHumanIsDegenerate) {
  const LanguagePairInput lp{"a", {{"A", {}, {}, 1}, {"B", {}, {}, 2}}, {{"A", {}, {}, 1}, {"B", {}, {}, 1}}};
  const std::vector<LanguagePairInput> inputs{lp};
  EXPECT_THROW(evaluate("m", inputs), DegenerateInput);
}
