#include "ucorr/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "ucorr/parallel.hpp"
#include "ucorr/random.hpp"
#include "ucorr/simulate.hpp"

namespace ucorr {
namespace {

// ----------------------------------------------------------------------------
// Null variance and the analytic tail.
// ----------------------------------------------------------------------------

TEST(NullVariance, ReducesToRankSumVarianceWithoutBiasTerm) {
  // k_bias = 0 leaves the plain two-sample normal approximation.
  EXPECT_DOUBLE_EQ(null_variance(10, 10, 0.0), (1.0 + 10.0 + 10.0) / 300.0);
  EXPECT_DOUBLE_EQ(null_variance(100, 400, 0.0), 501.0 / 120000.0);
}

TEST(NullVariance, HandComputedValues) {
  EXPECT_DOUBLE_EQ(null_variance(200, 2000, 0.5), 3201.0 / 1200000.0);
  EXPECT_NEAR(std::sqrt(null_variance(200, 2000, 0.5)), 0.0516, 1e-4);
  EXPECT_NEAR(std::sqrt(null_variance(300, 2000, 0.5)), 0.0428, 1e-4);
}

TEST(NullVariance, RejectsSmallSamplesAndDegenerateBias) {
  EXPECT_THROW(null_variance(8, 100, 0.5), std::invalid_argument);
  EXPECT_THROW(null_variance(100, 8, 0.5), std::invalid_argument);
  EXPECT_THROW(null_variance(100, 100, -1.0), std::invalid_argument);
  EXPECT_NO_THROW(null_variance(9, 9, 0.5));
}

TEST(NullParams, CarriesTheStandardDeviation) {
  const NullParams params(200, 2000);
  EXPECT_EQ(params.k_bias, 0.5);
  EXPECT_DOUBLE_EQ(params.sigma0, std::sqrt(3201.0 / 1200000.0));
}

TEST(NormalUpperTail, ReferenceValues) {
  EXPECT_EQ(normal_upper_tail(0.0), 0.5);
  EXPECT_NEAR(normal_upper_tail(1.0), 0.158655, 1e-6);
  EXPECT_NEAR(normal_upper_tail(-1.0), 0.841345, 1e-6);
  EXPECT_NEAR(normal_upper_tail(1.959963985), 0.025, 1e-7);
  EXPECT_LT(normal_upper_tail(6.0), 1e-8);
  EXPECT_GT(normal_upper_tail(-6.0), 1.0 - 1e-8);
}

TEST(AnalyticPValue, CentersAtOneHalf) {
  const NullParams params(200, 2000);
  EXPECT_EQ(p_value_analytic(0.0, params), 0.5);
  EXPECT_NEAR(p_value_analytic(params.sigma0, params), 0.158655, 1e-6);
  EXPECT_NEAR(p_value_analytic(-params.sigma0, params), 0.841345, 1e-6);
}

// ----------------------------------------------------------------------------
// Analytic test plumbing.
// ----------------------------------------------------------------------------

TEST(AnalyticTest, ZEqualsRhoOverSigma) {
  const RawSample data = generate({RelationshipKind::Linear, 60, 40.0, 3});
  ForestConfig cfg;
  cfg.tree_count = 30;
  const TestResult res = analytic_test(data, cfg);
  EXPECT_EQ(res.method, TestMethod::Analytic);
  EXPECT_EQ(res.n, 60);
  EXPECT_EQ(res.m, 2000);
  EXPECT_DOUBLE_EQ(res.z, res.rho / res.sigma0);
  EXPECT_GE(res.p_value, 0.0);
  EXPECT_LE(res.p_value, 1.0);
  EXPECT_DOUBLE_EQ(res.sigma0, std::sqrt(null_variance(60, 2000, 0.5)));
}

TEST(AnalyticTest, StrongSignalGetsTinyPValue) {
  const RawSample data = generate({RelationshipKind::Circle, 300, 0.0, 4});
  const TestResult res = analytic_test(data, ForestConfig{});
  EXPECT_GE(res.rho, 0.6);
  EXPECT_LT(res.p_value, 1e-6);
}

// ----------------------------------------------------------------------------
// Permutation p-value.
// ----------------------------------------------------------------------------

TEST(PermutationPValue, RejectsTooFewReplicates) {
  const RawSample data = generate({RelationshipKind::Independent, 30, 0.0, 5});
  ForestConfig cfg;
  cfg.tree_count = 10;
  EXPECT_THROW(p_value_permutation(data, cfg, 18), std::invalid_argument);
}

TEST(PermutationPValue, ExtremeObservedValueGetsTheMinimum) {
  // Noiseless linear dependence dwarfs every shuffled replicate, so the
  // observed value ranks first: p = 1 / (n_perms + 1).
  const RawSample data = generate({RelationshipKind::Linear, 40, 0.0, 6});
  ForestConfig cfg;
  cfg.tree_count = 20;
  cfg.seed = 8;
  EXPECT_DOUBLE_EQ(p_value_permutation(data, cfg, 19), 1.0 / 20.0);
}

TEST(PermutationPValue, ThreadCountDoesNotChangeTheResult) {
  const RawSample data = generate({RelationshipKind::Parabola, 30, 50.0, 7});
  ForestConfig one;
  one.tree_count = 10;
  one.seed = 21;
  one.threads = 1;
  ForestConfig many = one;
  many.threads = 4;
  EXPECT_EQ(p_value_permutation(data, one, 19), p_value_permutation(data, many, 19));
}

TEST(PermutationTest, ReportsTheMethodAndBounds) {
  const RawSample data = generate({RelationshipKind::Sine, 40, 20.0, 9});
  ForestConfig cfg;
  cfg.tree_count = 20;
  const TestResult res = permutation_test(data, cfg, 19);
  EXPECT_EQ(res.method, TestMethod::Permutation);
  EXPECT_GE(res.p_value, 1.0 / 20.0);
  EXPECT_LE(res.p_value, 1.0);
  EXPECT_DOUBLE_EQ(res.z, res.rho / res.sigma0);
}

// Under independence the permutation test must hold its size: with 19
// replicates, p <= 0.05 exactly when the observed value beats all of them,
// which happens with probability 1/20 under exchangeability.
TEST(PermutationPValue, HoldsSizeUnderIndependence) {
  const std::int32_t reps = 500;
  std::vector<std::uint8_t> reject(static_cast<std::size_t>(reps), 0);
  parallel_for(reps, 0, [&](std::int64_t r) {
    const RawSample data = generate(
        {RelationshipKind::Independent, 30, 0.0, 1000 + static_cast<std::uint64_t>(r)});
    ForestConfig cfg;
    cfg.tree_count = 20;
    cfg.seed = derive_seed(555, Stream::Replicate, static_cast<std::uint64_t>(r));
    cfg.threads = 1;
    reject[static_cast<std::size_t>(r)] =
        p_value_permutation(data, cfg, 19) <= 0.05 ? 1 : 0;
  });
  const double rate =
      static_cast<double>(std::accumulate(reject.begin(), reject.end(), 0)) / reps;
  EXPECT_GE(rate, 0.02);
  EXPECT_LE(rate, 0.10);
}

// ----------------------------------------------------------------------------
// Mann-Whitney U.
// ----------------------------------------------------------------------------

TEST(MannWhitney, CompleteSeparation) {
  std::vector<double> high(10);
  std::vector<double> low(10);
  std::iota(high.begin(), high.end(), 100.0);
  std::iota(low.begin(), low.end(), 0.0);
  const MannWhitneyStat stat = mann_whitney_u(high, low);
  EXPECT_EQ(stat.u, 100.0);
  EXPECT_EQ(stat.mu, 50.0);
  EXPECT_GT(stat.z, 3.0);
  EXPECT_LT(stat.p_value, 1e-3);
  EXPECT_FALSE(stat.degenerate);
}

TEST(MannWhitney, IdenticalGroupsSitAtTheCenter) {
  const std::vector<double> a{1.0, 2.0, 3.0};
  const std::vector<double> b{1.0, 2.0, 3.0};
  const MannWhitneyStat stat = mann_whitney_u(a, b);
  EXPECT_DOUBLE_EQ(stat.u, 4.5);  // n1*n2/2
  EXPECT_EQ(stat.z, 0.0);
  EXPECT_EQ(stat.p_value, 0.5);
}

TEST(MannWhitney, AllValuesTiedIsDegenerate) {
  const std::vector<double> a{2.0, 2.0};
  const std::vector<double> b{2.0, 2.0, 2.0};
  const MannWhitneyStat stat = mann_whitney_u(a, b);
  EXPECT_TRUE(stat.degenerate);
  EXPECT_EQ(stat.p_value, 0.5);
  EXPECT_EQ(stat.sigma, 0.0);
}

TEST(MannWhitney, MatchesBruteForcePairwiseCounting) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n1 = static_cast<std::size_t>(rng.next_int(1, 50));
    const auto n2 = static_cast<std::size_t>(rng.next_int(1, 50));
    std::vector<double> a(n1);
    std::vector<double> b(n2);
    // Small alphabet: ties across and within groups are the common case.
    for (double& v : a) v = static_cast<double>(rng.next_int(0, 8));
    for (double& v : b) v = static_cast<double>(rng.next_int(0, 8));

    double brute = 0.0;
    for (const double va : a) {
      for (const double vb : b) {
        if (va > vb) brute += 1.0;
        else if (va == vb) brute += 0.5;
      }
    }
    const MannWhitneyStat stat = mann_whitney_u(a, b);
    ASSERT_DOUBLE_EQ(stat.u, brute) << "n1=" << n1 << " n2=" << n2;
    ASSERT_EQ(stat.n1, static_cast<std::int64_t>(n1));
    ASSERT_EQ(stat.n2, static_cast<std::int64_t>(n2));
  }
}

TEST(MannWhitneyTest, MapsUOntoTheCoefficientScale) {
  ScoreTable t(3, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    t.obs_trees[i] = 1;
    t.obs_sum[i] = 0.8;
  }
  for (std::size_t p = 0; p < 2; ++p) {
    t.perm_trees[p] = 1;
    t.perm_sum[p] = 0.1;
  }
  const TestResult res = mann_whitney_test(t);
  EXPECT_EQ(res.method, TestMethod::MannWhitney);
  EXPECT_EQ(res.rho, 1.0);  // complete separation -> rank-biserial 1
  EXPECT_DOUBLE_EQ(res.z, res.rho / res.sigma0);
  EXPECT_EQ(res.n, 3);
  EXPECT_EQ(res.m, 2);
}

TEST(MannWhitneyTest, SkipsUnscoredEntries) {
  ScoreTable t(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    t.obs_trees[i] = i == 0 ? 0 : 1;  // first observed row never scored
    t.obs_sum[i] = 0.9;
  }
  for (std::size_t p = 0; p < 3; ++p) {
    t.perm_trees[p] = 1;
    t.perm_sum[p] = 0.2;
  }
  const TestResult res = mann_whitney_test(t);
  EXPECT_EQ(res.n, 3);
  EXPECT_EQ(res.m, 3);
  EXPECT_EQ(res.rho, 1.0);
}

}  // namespace
}  // namespace ucorr
