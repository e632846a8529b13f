#include "ucorr/forest.hpp"

#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "ucorr/random.hpp"
#include "ucorr/simulate.hpp"

namespace ucorr {
namespace {

// ----------------------------------------------------------------------------
// Configuration resolution.
// ----------------------------------------------------------------------------

TEST(ForestConfig, ResolvesDataDependentDefaults) {
  const ForestConfig base;
  const ForestConfig at200 = base.resolved(200);
  EXPECT_EQ(at200.m, 2000);
  EXPECT_EQ(at200.max_leaf_count, 15);   // ceil(sqrt(200))
  EXPECT_EQ(at200.min_leaf_width, 6);    // ceil(0.03 * 200)
  EXPECT_EQ(at200.tree_count, 100);
  EXPECT_EQ(at200.split_trials, 10);

  const ForestConfig at10 = base.resolved(10);
  EXPECT_EQ(at10.m, 90);                 // n*(n-1) < 2000
  EXPECT_EQ(at10.max_leaf_count, 4);     // ceil(sqrt(10))
  EXPECT_EQ(at10.min_leaf_width, 1);     // ceil(0.3)

  const ForestConfig big = base.resolved(10000);
  EXPECT_EQ(big.max_leaf_count, 64);     // sqrt cap
  EXPECT_EQ(big.min_leaf_width, 300);

  const ForestConfig square = base.resolved(49);
  EXPECT_EQ(square.max_leaf_count, 7);   // exact square stays sqrt(n)
}

TEST(ForestConfig, ExplicitValuesSurviveResolution) {
  ForestConfig cfg;
  cfg.m = 500;
  cfg.max_leaf_count = 9;
  cfg.min_leaf_width = 2;
  const ForestConfig r = cfg.resolved(100);
  EXPECT_EQ(r.m, 500);
  EXPECT_EQ(r.max_leaf_count, 9);
  EXPECT_EQ(r.min_leaf_width, 2);
}

TEST(ForestConfig, RejectsOutOfRangeSettings) {
  ForestConfig cfg;
  cfg.m = 91;  // > n*(n-1) at n=10
  EXPECT_THROW(cfg.resolved(10), std::invalid_argument);
  cfg = ForestConfig{};
  cfg.tree_count = 0;
  EXPECT_THROW(cfg.resolved(10), std::invalid_argument);
  cfg = ForestConfig{};
  cfg.random_split_fraction = 1.5;
  EXPECT_THROW(cfg.resolved(10), std::invalid_argument);
  cfg = ForestConfig{};
  cfg.max_leaf_count = 1;
  EXPECT_THROW(cfg.resolved(10), std::invalid_argument);
}

// ----------------------------------------------------------------------------
// Bootstrap.
// ----------------------------------------------------------------------------

TEST(Bootstrap, DrawsNIndicesWithConsistentMembership) {
  Rng rng(1);
  const Bootstrap boot = bootstrap_indices(50, rng);
  ASSERT_EQ(boot.indices.size(), 50u);
  ASSERT_EQ(boot.in_bag.size(), 50u);
  std::vector<std::uint8_t> seen(50, 0);
  for (const std::int32_t i : boot.indices) {
    ASSERT_GE(i, 0);
    ASSERT_LT(i, 50);
    seen[static_cast<std::size_t>(i)] = 1;
  }
  EXPECT_EQ(seen, boot.in_bag);
}

TEST(Bootstrap, DeterministicForFixedSeed) {
  Rng a(77);
  Rng b(77);
  EXPECT_EQ(bootstrap_indices(20, a).indices, bootstrap_indices(20, b).indices);
}

TEST(Bootstrap, OutOfBagShareNearOneOverE) {
  Rng rng(2);
  const std::int32_t n = 100;
  const int draws = 400;
  std::int64_t oob = 0;
  for (int d = 0; d < draws; ++d) {
    const Bootstrap boot = bootstrap_indices(n, rng);
    for (const std::uint8_t flag : boot.in_bag) oob += flag == 0 ? 1 : 0;
  }
  const double share = static_cast<double>(oob) / (static_cast<double>(draws) * n);
  EXPECT_NEAR(share, std::exp(-1.0), 0.03);
}

TEST(Bootstrap, TwoRowCaseCoversAllFourMultisets) {
  std::int64_t counts[2][2] = {{0, 0}, {0, 0}};
  Rng rng(3);
  const int draws = 4000;
  for (int d = 0; d < draws; ++d) {
    const Bootstrap boot = bootstrap_indices(2, rng);
    counts[boot.indices[0]][boot.indices[1]] += 1;
  }
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(static_cast<double>(counts[i][j]) / draws, 0.25, 0.05);
    }
  }
}

// ----------------------------------------------------------------------------
// Permuted-pair subset.
// ----------------------------------------------------------------------------

TEST(PermutedSubset, ExhaustiveWhenMEqualsAllOffDiagonalPairs) {
  Rng rng(4);
  const PermutedSubset subset = sample_permuted_subset(3, 6, rng);
  const std::vector<std::pair<std::int32_t, std::int32_t>> expect{
      {0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}};
  EXPECT_EQ(subset.pairs, expect);
}

TEST(PermutedSubset, DistinctOffDiagonalPairs) {
  Rng rng(5);
  const std::int32_t n = 100;
  const PermutedSubset subset = sample_permuted_subset(n, 2000, rng);
  ASSERT_EQ(subset.size(), 2000);
  std::set<std::pair<std::int32_t, std::int32_t>> seen;
  for (const auto& [i, j] : subset.pairs) {
    ASSERT_GE(i, 0);
    ASSERT_LT(i, n);
    ASSERT_GE(j, 0);
    ASSERT_LT(j, n);
    ASSERT_NE(i, j);
    ASSERT_TRUE(seen.insert({i, j}).second) << "duplicate pair (" << i << "," << j << ")";
  }
}

TEST(PermutedSubset, RejectsOversizedDraw) {
  Rng rng(6);
  EXPECT_THROW(sample_permuted_subset(3, 7, rng), std::invalid_argument);
  EXPECT_THROW(sample_permuted_subset(3, 0, rng), std::invalid_argument);
}

TEST(PermutedSubset, DeterministicForFixedSeed) {
  Rng a(7);
  Rng b(7);
  EXPECT_EQ(sample_permuted_subset(40, 300, a).pairs,
            sample_permuted_subset(40, 300, b).pairs);
}

// ----------------------------------------------------------------------------
// Score comparison and the coefficient.
// ----------------------------------------------------------------------------

TEST(QCompare, SignConvention) {
  EXPECT_EQ(q_compare(0.7, 0.3), 1);
  EXPECT_EQ(q_compare(0.3, 0.3), 0);
  EXPECT_EQ(q_compare(0.1, 0.3), -1);
}

ScoreTable table_from(const std::vector<double>& obs_scores,
                      const std::vector<double>& perm_scores,
                      const std::vector<std::int32_t>& obs_trees,
                      const std::vector<std::int32_t>& perm_trees) {
  ScoreTable t(static_cast<std::int64_t>(obs_scores.size()),
               static_cast<std::int64_t>(perm_scores.size()));
  for (std::size_t i = 0; i < obs_scores.size(); ++i) {
    t.obs_trees[i] = obs_trees[i];
    t.obs_sum[i] = obs_scores[i] * obs_trees[i];
  }
  for (std::size_t p = 0; p < perm_scores.size(); ++p) {
    t.perm_trees[p] = perm_trees[p];
    t.perm_sum[p] = perm_scores[p] * perm_trees[p];
  }
  return t;
}

TEST(ComputeRho, PerfectSeparationGivesOne) {
  const ScoreTable t =
      table_from({0.9, 0.8, 0.7}, {0.2, 0.1}, {1, 1, 1}, {1, 1});
  EXPECT_EQ(compute_rho(t), 1.0);
}

TEST(ComputeRho, AllTiedScoresGiveZero) {
  const ScoreTable t = table_from({0.5, 0.5}, {0.5, 0.5, 0.5}, {2, 2}, {1, 1, 1});
  EXPECT_EQ(compute_rho(t), 0.0);
}

TEST(ComputeRho, ReversedSeparationGivesMinusOne) {
  const ScoreTable t = table_from({0.1, 0.2}, {0.8, 0.9}, {1, 1}, {1, 1});
  EXPECT_EQ(compute_rho(t), -1.0);
}

// The sorted-scan evaluation must agree exactly with the quadratic definition,
// unscored entries contributing ties while the denominator stays n*m.
TEST(ComputeRho, MatchesBruteForcePairwiseSum) {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = static_cast<std::int64_t>(rng.next_int(1, 40));
    const auto m = static_cast<std::int64_t>(rng.next_int(1, 60));
    ScoreTable t(n, m);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto trees = static_cast<std::int32_t>(rng.next_int(0, 3));
      t.obs_trees[static_cast<std::size_t>(i)] = trees;
      // Coarse score grid forces plenty of exact ties.
      t.obs_sum[static_cast<std::size_t>(i)] =
          trees * 0.25 * static_cast<double>(rng.next_int(0, 4));
    }
    for (std::int64_t p = 0; p < m; ++p) {
      const auto trees = static_cast<std::int32_t>(rng.next_int(0, 3));
      t.perm_trees[static_cast<std::size_t>(p)] = trees;
      t.perm_sum[static_cast<std::size_t>(p)] =
          trees * 0.25 * static_cast<double>(rng.next_int(0, 4));
    }

    std::int64_t net = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (!t.obs_scored(i)) continue;
      for (std::int64_t p = 0; p < m; ++p) {
        if (!t.perm_scored(p)) continue;
        net += q_compare(t.obs_score(i), t.perm_score(p));
      }
    }
    const double brute =
        static_cast<double>(net) / (static_cast<double>(n) * static_cast<double>(m));
    ASSERT_EQ(compute_rho(t), brute);
  }
}

// ----------------------------------------------------------------------------
// Ensemble scoring.
// ----------------------------------------------------------------------------

TEST(AggregateScores, SingleTreeEligibilityFollowsTheBootstrap) {
  const std::int32_t n = 40;
  const RawSample sample = generate({RelationshipKind::Independent, n, 0.0, 31});
  Rng subset_rng(9);
  const PermutedSubset subset = sample_permuted_subset(n, 200, subset_rng);

  ForestConfig cfg;
  cfg.tree_count = 1;
  cfg.seed = 123;
  cfg.threads = 1;
  const ScoreTable table = aggregate_scores(sample, subset, cfg);

  // Rebuild the tree's bootstrap from the same derived stream: observed rows
  // are scored iff out of bag, pairs iff either constituent row is.
  Rng tree_rng(derive_seed(123, Stream::Tree, 0));
  const Bootstrap boot = bootstrap_indices(n, tree_rng);
  for (std::int32_t i = 0; i < n; ++i) {
    EXPECT_EQ(table.obs_trees[static_cast<std::size_t>(i)],
              boot.in_bag[static_cast<std::size_t>(i)] ? 0 : 1);
  }
  for (std::size_t p = 0; p < subset.pairs.size(); ++p) {
    const auto [i, j] = subset.pairs[p];
    const bool eligible = !boot.in_bag[static_cast<std::size_t>(i)] ||
                          !boot.in_bag[static_cast<std::size_t>(j)];
    EXPECT_EQ(table.perm_trees[p], eligible ? 1 : 0);
  }
}

TEST(AggregateScores, EveryExampleScoredWithManyTrees) {
  const std::int32_t n = 50;
  const RawSample sample = generate({RelationshipKind::Linear, n, 20.0, 5});
  Rng subset_rng(10);
  const PermutedSubset subset = sample_permuted_subset(n, 400, subset_rng);
  ForestConfig cfg;
  cfg.tree_count = 100;
  cfg.seed = 6;
  const ScoreTable table = aggregate_scores(sample, subset, cfg);
  for (std::int64_t i = 0; i < table.n(); ++i) {
    ASSERT_TRUE(table.obs_scored(i));
    const double g = table.obs_score(i);
    ASSERT_GE(g, 0.0);
    ASSERT_LE(g, 1.0);
  }
  for (std::int64_t p = 0; p < table.m(); ++p) {
    ASSERT_TRUE(table.perm_scored(p));
    const double g = table.perm_score(p);
    ASSERT_GE(g, 0.0);
    ASSERT_LE(g, 1.0);
  }
}

// ----------------------------------------------------------------------------
// End-to-end coefficient.
// ----------------------------------------------------------------------------

TEST(Ucorr, RejectsTinySamples) {
  const RawSample tiny = generate({RelationshipKind::Independent, 9, 0.0, 1});
  try {
    ucorr(tiny, ForestConfig{});
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("at least 10"), std::string::npos);
  }
}

TEST(Ucorr, StrongDependenceScoresHigh) {
  const RawSample circle = generate({RelationshipKind::Circle, 300, 0.0, 7});
  const UcorrResult res = ucorr(circle, ForestConfig{});
  EXPECT_GE(res.rho, 0.6);
  EXPECT_LE(res.rho, 1.0);
}

TEST(Ucorr, BoundedAndReproducible) {
  const RawSample data = generate({RelationshipKind::Parabola, 80, 30.0, 11});
  ForestConfig cfg;
  cfg.tree_count = 40;
  cfg.seed = 99;
  const UcorrResult a = ucorr(data, cfg);
  const UcorrResult b = ucorr(data, cfg);
  EXPECT_GE(a.rho, -1.0);
  EXPECT_LE(a.rho, 1.0);
  EXPECT_EQ(a.rho, b.rho);
}

TEST(Ucorr, ThreadCountDoesNotChangeTheResult) {
  const RawSample data = generate({RelationshipKind::Sine, 60, 10.0, 13});
  ForestConfig one;
  one.tree_count = 30;
  one.seed = 17;
  one.threads = 1;
  ForestConfig many = one;
  many.threads = 4;
  EXPECT_EQ(ucorr(data, one).rho, ucorr(data, many).rho);
}

TEST(Ucorr, InvariantUnderStrictlyIncreasingTransforms) {
  const RawSample data = generate({RelationshipKind::Cross, 70, 15.0, 19});
  RawSample warped = data;
  for (double& x : warped.xs) x = std::exp(x);
  for (double& y : warped.ys) y = y * y * y + 2.0 * y;  // strictly increasing
  ForestConfig cfg;
  cfg.tree_count = 30;
  cfg.seed = 23;
  EXPECT_EQ(ucorr(data, cfg).rho, ucorr(warped, cfg).rho);
}

TEST(Ucorr, ResultEchoesTheResolvedConfig) {
  const RawSample data = generate({RelationshipKind::Independent, 50, 0.0, 29});
  ForestConfig cfg;
  cfg.tree_count = 20;
  const UcorrResult res = ucorr(data, cfg);
  EXPECT_EQ(res.config.m, 2000);            // min(2000, 50*49)
  EXPECT_EQ(res.config.max_leaf_count, 8);  // ceil(sqrt(50))
  EXPECT_EQ(res.config.min_leaf_width, 2);  // ceil(1.5)
  EXPECT_EQ(res.table.n(), 50);
  EXPECT_EQ(res.table.m(), 2000);
}

}  // namespace
}  // namespace ucorr
