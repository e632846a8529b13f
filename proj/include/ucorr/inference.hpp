#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "ucorr/forest.hpp"
#include "ucorr/parallel.hpp"
#include "ucorr/random.hpp"
#include "ucorr/rank_space.hpp"

namespace ucorr {

// ============================================================================
// Inference on the coefficient.
//
// Under independence the coefficient is approximately normal around zero with
// variance (1 + n + m*(1 + k_bias)) / (3*n*m): the rank-sum variance of n
// observed versus m permuted scores, inflated by k_bias to absorb the score
// correlation induced by shared training data.  Alternatives: an explicit
// permutation test, and a Mann-Whitney test on the score table itself.
// ============================================================================

inline double null_variance(std::int64_t n, std::int64_t m, double k_bias) {
  detail::require(n > 8 && m > 8,
                  "the normal null approximation requires n > 8 and m > 8");
  detail::require(k_bias > -1.0, "k_bias must exceed -1");
  return (1.0 + static_cast<double>(n) +
          static_cast<double>(m) * (1.0 + k_bias)) /
         (3.0 * static_cast<double>(n) * static_cast<double>(m));
}

struct NullParams {
  std::int64_t n = 0;
  std::int64_t m = 0;
  double k_bias = 0.5;
  double sigma0 = 0.0;  // null standard deviation of rho

  NullParams(std::int64_t n_, std::int64_t m_, double k_bias_ = 0.5)
      : n(n_), m(m_), k_bias(k_bias_), sigma0(std::sqrt(null_variance(n_, m_, k_bias_))) {}
};

// Upper tail of the standard normal; |error| stays below 1e-7 across the
// whole real line (erfc is accurate to machine precision).
inline double normal_upper_tail(double z) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  return 0.5 * std::erfc(z * kInvSqrt2);
}

// One-sided p-value for observed rho under the normal null: p = P(R >= rho).
inline double p_value_analytic(double rho, const NullParams& params) {
  return normal_upper_tail(rho / params.sigma0);
}

enum class TestMethod : std::uint8_t { Analytic, Permutation, MannWhitney };

struct TestResult {
  double rho = 0.0;
  double sigma0 = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  TestMethod method = TestMethod::Analytic;
  bool degenerate = false;  // all scores tied; p pinned at 0.5
  std::int64_t n = 0;
  std::int64_t m = 0;
  ForestConfig config;  // resolved configuration echo
  double k_bias = 0.5;
  std::int64_t elapsed_ms = 0;
};

namespace detail {

inline std::int64_t elapsed_ms_since(
    std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace detail

// Coefficient plus analytic normal p-value.
inline TestResult analytic_test(const RawSample& sample, const ForestConfig& config,
                                double k_bias = 0.5) {
  const auto start = std::chrono::steady_clock::now();
  const UcorrResult res = ucorr(sample, config);
  const NullParams params(static_cast<std::int64_t>(sample.size()), res.config.m,
                          k_bias);
  TestResult out;
  out.rho = res.rho;
  out.sigma0 = params.sigma0;
  out.z = res.rho / params.sigma0;
  out.p_value = p_value_analytic(res.rho, params);
  out.method = TestMethod::Analytic;
  out.n = static_cast<std::int64_t>(sample.size());
  out.m = res.config.m;
  out.config = res.config;
  out.k_bias = k_bias;
  out.elapsed_ms = detail::elapsed_ms_since(start);
  return out;
}

// Permutation p-value: n_perms replicates shuffle the y column and recompute
// the coefficient under a replicate-derived seed; p = (1 + #{rho_null >=
// rho_obs}) / (n_perms + 1).  Replicates run in parallel but their outcomes
// are combined by index, so the result is thread-count independent.
inline double p_value_permutation(const RawSample& sample, const ForestConfig& config,
                                  std::int32_t n_perms) {
  detail::require(n_perms >= 19, "permutation test needs at least 19 replicates");
  const double observed = ucorr(sample, config).rho;

  std::vector<std::uint8_t> at_least(static_cast<std::size_t>(n_perms), 0);
  parallel_for(n_perms, config.threads, [&](std::int64_t r) {
    RawSample shuffled = sample;
    Rng shuffle_rng(
        derive_seed(config.seed, Stream::Shuffle, static_cast<std::uint64_t>(r)));
    shuffle_in_place(shuffled.ys, shuffle_rng);
    ForestConfig rep_cfg = config;
    rep_cfg.seed =
        derive_seed(config.seed, Stream::Replicate, static_cast<std::uint64_t>(r));
    rep_cfg.threads = 1;  // parallelism lives at the replicate level
    at_least[static_cast<std::size_t>(r)] =
        ucorr(shuffled, rep_cfg).rho >= observed ? 1 : 0;
  });
  const std::int64_t count =
      std::accumulate(at_least.begin(), at_least.end(), std::int64_t{0});
  return static_cast<double>(1 + count) / static_cast<double>(n_perms + 1);
}

inline TestResult permutation_test(const RawSample& sample, const ForestConfig& config,
                                   std::int32_t n_perms, double k_bias = 0.5) {
  const auto start = std::chrono::steady_clock::now();
  const UcorrResult res = ucorr(sample, config);
  TestResult out;
  out.rho = res.rho;
  const NullParams params(static_cast<std::int64_t>(sample.size()), res.config.m,
                          k_bias);
  out.sigma0 = params.sigma0;
  out.z = res.rho / params.sigma0;
  out.p_value = p_value_permutation(sample, config, n_perms);
  out.method = TestMethod::Permutation;
  out.n = static_cast<std::int64_t>(sample.size());
  out.m = res.config.m;
  out.config = res.config;
  out.k_bias = k_bias;
  out.elapsed_ms = detail::elapsed_ms_since(start);
  return out;
}

// Mann-Whitney U of group A against group B with midrank tie handling and the
// tie-corrected normal approximation, one-sided toward "A larger".
struct MannWhitneyStat {
  double u = 0.0;        // #(a > b) + 0.5 * #(a == b) over all cross pairs
  double mu = 0.0;       // null mean n1*n2/2
  double sigma = 0.0;    // tie-corrected null standard deviation of U
  double z = 0.0;
  double p_value = 0.5;
  bool degenerate = false;  // every pooled value tied; sigma is zero
  std::int64_t n1 = 0;
  std::int64_t n2 = 0;
};

inline MannWhitneyStat mann_whitney_u(std::span<const double> a,
                                      std::span<const double> b) {
  detail::require(!a.empty() && !b.empty(), "both groups must be non-empty");
  const auto n1 = static_cast<std::int64_t>(a.size());
  const auto n2 = static_cast<std::int64_t>(b.size());
  const std::int64_t total = n1 + n2;

  struct Entry {
    double value;
    bool first_group;
  };
  std::vector<Entry> pooled;
  pooled.reserve(static_cast<std::size_t>(total));
  for (const double v : a) pooled.push_back({v, true});
  for (const double v : b) pooled.push_back({v, false});
  std::sort(pooled.begin(), pooled.end(),
            [](const Entry& l, const Entry& r) { return l.value < r.value; });

  // Midranks within tie groups; accumulate the tie correction term t^3 - t.
  double rank_sum_a = 0.0;
  double tie_term = 0.0;
  std::size_t i = 0;
  while (i < pooled.size()) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].value == pooled[i].value) ++j;
    const auto t = static_cast<double>(j - i);
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (pooled[k].first_group) rank_sum_a += midrank;
    }
    tie_term += t * t * t - t;
    i = j;
  }

  MannWhitneyStat stat;
  stat.n1 = n1;
  stat.n2 = n2;
  stat.u = rank_sum_a - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
  stat.mu = static_cast<double>(n1) * static_cast<double>(n2) / 2.0;
  const double nn = static_cast<double>(total);
  const double variance =
      (static_cast<double>(n1) * static_cast<double>(n2) / 12.0) *
      ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (variance <= 0.0) {
    stat.degenerate = true;
    stat.sigma = 0.0;
    stat.z = 0.0;
    stat.p_value = 0.5;
    return stat;
  }
  stat.sigma = std::sqrt(variance);
  stat.z = (stat.u - stat.mu) / stat.sigma;
  stat.p_value = normal_upper_tail(stat.z);
  return stat;
}

// Mann-Whitney test of the aggregated observed scores against the aggregated
// permuted scores.  The reported rho is the rank-biserial form 2U/(n1*n2) - 1,
// which makes z == rho / sigma0 hold here as well.
inline TestResult mann_whitney_test(const ScoreTable& table) {
  std::vector<double> observed;
  std::vector<double> permuted;
  observed.reserve(static_cast<std::size_t>(table.n()));
  permuted.reserve(static_cast<std::size_t>(table.m()));
  for (std::int64_t i = 0; i < table.n(); ++i) {
    if (table.obs_scored(i)) observed.push_back(table.obs_score(i));
  }
  for (std::int64_t p = 0; p < table.m(); ++p) {
    if (table.perm_scored(p)) permuted.push_back(table.perm_score(p));
  }
  const MannWhitneyStat stat = mann_whitney_u(observed, permuted);

  const double pairs = static_cast<double>(stat.n1) * static_cast<double>(stat.n2);
  TestResult out;
  out.rho = 2.0 * stat.u / pairs - 1.0;
  out.sigma0 = 2.0 * stat.sigma / pairs;
  out.z = stat.z;
  out.p_value = stat.p_value;
  out.method = TestMethod::MannWhitney;
  out.degenerate = stat.degenerate;
  out.n = stat.n1;
  out.m = stat.n2;
  return out;
}

}  // namespace ucorr
