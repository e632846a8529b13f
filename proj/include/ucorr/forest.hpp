#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ucorr/parallel.hpp"
#include "ucorr/random.hpp"
#include "ucorr/rank_space.hpp"
#include "ucorr/tree.hpp"

namespace ucorr {

// ============================================================================
// Forest ensemble and the dependence coefficient.
//
// Each tree is trained on a bootstrap of the observed sample and scores, out
// of bag, both the observed examples and a fixed subset of permuted pairs
// (x_i, y_j), i != j.  A permuted pair is eligible for a tree when either of
// its constituent rows is out of bag for that tree.  The coefficient is the
// normalized sign count of all observed-vs-permuted comparisons of the
// averaged scores: +1 when every observed example outranks every permuted
// one, 0 in expectation under independence.
// ============================================================================

struct ForestConfig {
  std::int32_t tree_count = 100;
  double random_split_fraction = 0.5;  // leading fraction of trees grown semi-randomly
  std::int64_t m = 0;                  // permuted pairs; 0 resolves to min(2000, n*(n-1))
  std::int32_t max_leaf_count = 0;     // 0 resolves to min(ceil(sqrt(n)), 64)
  Rank min_leaf_width = 0;             // 0 resolves to ceil(0.03 * n)
  std::int32_t split_trials = 10;
  std::uint64_t seed = 0;
  std::int32_t threads = 0;  // 0 uses all hardware threads; never changes results

  ForestConfig resolved(std::int64_t n) const;
};

namespace detail {

inline std::int64_t ceil_sqrt(std::int64_t n) {
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(n)));
  while (r > 0 && (r - 1) * (r - 1) >= n) --r;
  while (r * r < n) ++r;
  return r;
}

}  // namespace detail

inline ForestConfig ForestConfig::resolved(std::int64_t n) const {
  detail::require(n >= 2, "forest needs at least two rows");
  ForestConfig c = *this;
  if (c.m == 0) c.m = std::min<std::int64_t>(2000, n * (n - 1));
  if (c.max_leaf_count == 0) {
    c.max_leaf_count =
        static_cast<std::int32_t>(std::min<std::int64_t>(detail::ceil_sqrt(n), 64));
  }
  if (c.min_leaf_width == 0) c.min_leaf_width = static_cast<Rank>((3 * n + 99) / 100);
  detail::require(c.tree_count >= 1, "tree_count must be at least 1");
  detail::require(c.random_split_fraction >= 0.0 && c.random_split_fraction <= 1.0,
                  "random_split_fraction must lie in [0, 1]");
  detail::require(c.m >= 1 && c.m <= n * (n - 1),
                  "m must lie in [1, n*(n-1)] (off-diagonal pairs)");
  detail::require(c.max_leaf_count >= 2, "max_leaf_count must be at least 2");
  detail::require(c.min_leaf_width >= 1, "min_leaf_width must be at least 1");
  detail::require(c.split_trials >= 1, "split_trials must be at least 1");
  return c;
}

// One bootstrap draw: n row indices sampled with replacement, plus the in-bag
// membership mask used for out-of-bag eligibility.
struct Bootstrap {
  std::vector<std::int32_t> indices;
  std::vector<std::uint8_t> in_bag;
};

inline Bootstrap bootstrap_indices(std::int32_t n, Rng& rng) {
  detail::require(n >= 2, "bootstrap needs at least two rows");
  Bootstrap boot;
  boot.indices.reserve(static_cast<std::size_t>(n));
  boot.in_bag.assign(static_cast<std::size_t>(n), 0);
  for (std::int32_t k = 0; k < n; ++k) {
    const auto i =
        static_cast<std::int32_t>(rng.next_below(static_cast<std::uint64_t>(n)));
    boot.indices.push_back(i);
    boot.in_bag[static_cast<std::size_t>(i)] = 1;
  }
  return boot;
}

// The fixed subset of permuted pairs scored by every tree.
struct PermutedSubset {
  std::vector<std::pair<std::int32_t, std::int32_t>> pairs;  // (i, j), i != j

  std::int64_t size() const noexcept {
    return static_cast<std::int64_t>(pairs.size());
  }
};

// Samples m distinct off-diagonal pairs uniformly without replacement using
// Floyd's algorithm over flat pair ids, then orders them by id so the draw is
// independent of hash iteration order.
inline PermutedSubset sample_permuted_subset(std::int32_t n, std::int64_t m, Rng& rng) {
  detail::require(n >= 2, "permuted pairs need at least two rows");
  const std::int64_t total = static_cast<std::int64_t>(n) * (n - 1);
  detail::require(m >= 1 && m <= total, "m must lie in [1, n*(n-1)]");

  std::unordered_set<std::int64_t> chosen;
  chosen.reserve(static_cast<std::size_t>(m) * 2);
  std::vector<std::int64_t> ids;
  ids.reserve(static_cast<std::size_t>(m));
  for (std::int64_t t = total - m; t < total; ++t) {
    const auto r =
        static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(t) + 1));
    if (chosen.insert(r).second) {
      ids.push_back(r);
    } else {
      chosen.insert(t);
      ids.push_back(t);
    }
  }
  std::sort(ids.begin(), ids.end());

  PermutedSubset subset;
  subset.pairs.reserve(static_cast<std::size_t>(m));
  for (const std::int64_t id : ids) {
    const auto i = static_cast<std::int32_t>(id / (n - 1));
    const auto q = static_cast<std::int32_t>(id % (n - 1));
    const std::int32_t j = q + (q >= i ? 1 : 0);  // skip the diagonal
    subset.pairs.emplace_back(i, j);
  }
  return subset;
}

// Accumulated out-of-bag scores.  An example's aggregate score is the mean
// over the trees that were eligible to score it; examples no tree could score
// stay unscored and later count as ties.
struct ScoreTable {
  std::vector<double> obs_sum;
  std::vector<std::int32_t> obs_trees;
  std::vector<double> perm_sum;
  std::vector<std::int32_t> perm_trees;

  ScoreTable() = default;
  ScoreTable(std::int64_t n, std::int64_t m)
      : obs_sum(static_cast<std::size_t>(n), 0.0),
        obs_trees(static_cast<std::size_t>(n), 0),
        perm_sum(static_cast<std::size_t>(m), 0.0),
        perm_trees(static_cast<std::size_t>(m), 0) {}

  std::int64_t n() const noexcept { return static_cast<std::int64_t>(obs_sum.size()); }
  std::int64_t m() const noexcept { return static_cast<std::int64_t>(perm_sum.size()); }

  bool obs_scored(std::int64_t i) const {
    return obs_trees[static_cast<std::size_t>(i)] > 0;
  }
  bool perm_scored(std::int64_t p) const {
    return perm_trees[static_cast<std::size_t>(p)] > 0;
  }
  double obs_score(std::int64_t i) const {
    return obs_sum[static_cast<std::size_t>(i)] /
           obs_trees[static_cast<std::size_t>(i)];
  }
  double perm_score(std::int64_t p) const {
    return perm_sum[static_cast<std::size_t>(p)] /
           perm_trees[static_cast<std::size_t>(p)];
  }
};

// Trains the whole ensemble and accumulates out-of-bag scores.
//
// Tree z draws everything it needs from the stream derived from
// (seed, Stream::Tree, z): bootstrap first, then split sampling.  The first
// floor(random_split_fraction * tree_count) trees grow under the semi-random
// criterion, the rest under Gini gain.  Trees run in parallel; their score
// contributions are merged in tree order afterwards, so any thread count
// produces bit-identical sums.
inline ScoreTable aggregate_scores(const RawSample& sample,
                                   const PermutedSubset& subset,
                                   const ForestConfig& config) {
  const auto n = static_cast<std::int32_t>(sample.size());
  const ForestConfig cfg = config.resolved(n);
  const std::int64_t m = subset.size();
  const std::int32_t semi_random_trees = static_cast<std::int32_t>(
      std::floor(cfg.random_split_fraction * static_cast<double>(cfg.tree_count)));

  struct TreeScores {
    std::vector<std::pair<std::int32_t, double>> obs;
    std::vector<std::pair<std::int32_t, double>> perm;
  };
  std::vector<TreeScores> per_tree(static_cast<std::size_t>(cfg.tree_count));

  parallel_for(cfg.tree_count, cfg.threads, [&](std::int64_t z) {
    Rng rng(derive_seed(cfg.seed, Stream::Tree, static_cast<std::uint64_t>(z)));
    const Bootstrap boot = bootstrap_indices(n, rng);

    std::vector<double> bxs(static_cast<std::size_t>(n));
    std::vector<double> bys(static_cast<std::size_t>(n));
    for (std::int32_t k = 0; k < n; ++k) {
      const auto row = static_cast<std::size_t>(boot.indices[static_cast<std::size_t>(k)]);
      bxs[static_cast<std::size_t>(k)] = sample.xs[row];
      bys[static_cast<std::size_t>(k)] = sample.ys[row];
    }
    const RankMap xmap = build_rank_map(bxs);
    const RankMap ymap = build_rank_map(bys);
    RankedSample ranked;
    ranked.rx = descending_ranks(bxs);
    ranked.ry = descending_ranks(bys);
    ranked.n = n;

    TreeConfig tree_cfg;
    tree_cfg.max_leaf_count = cfg.max_leaf_count;
    tree_cfg.split_trial_count = cfg.split_trials;
    tree_cfg.min_leaf_width = cfg.min_leaf_width;
    tree_cfg.omega = 1.0 / static_cast<double>(n);
    tree_cfg.criterion = z < semi_random_trees ? SplitCriterion::SemiRandom
                                               : SplitCriterion::GiniGain;
    const DecisionTree tree = train_tree(ranked, tree_cfg, rng);

    // Rank every original row through this tree's maps once; pairs reuse them.
    std::vector<Rank> rx(static_cast<std::size_t>(n));
    std::vector<Rank> ry(static_cast<std::size_t>(n));
    for (std::int32_t i = 0; i < n; ++i) {
      rx[static_cast<std::size_t>(i)] = clamped_rank(xmap, sample.xs[static_cast<std::size_t>(i)]);
      ry[static_cast<std::size_t>(i)] = clamped_rank(ymap, sample.ys[static_cast<std::size_t>(i)]);
    }

    TreeScores& out = per_tree[static_cast<std::size_t>(z)];
    for (std::int32_t i = 0; i < n; ++i) {
      if (boot.in_bag[static_cast<std::size_t>(i)]) continue;
      out.obs.emplace_back(i, score_ranked(tree, rx[static_cast<std::size_t>(i)],
                                           ry[static_cast<std::size_t>(i)]));
    }
    for (std::int64_t p = 0; p < m; ++p) {
      const auto [i, j] = subset.pairs[static_cast<std::size_t>(p)];
      if (boot.in_bag[static_cast<std::size_t>(i)] &&
          boot.in_bag[static_cast<std::size_t>(j)]) {
        continue;  // eligible when either row is out of bag
      }
      out.perm.emplace_back(static_cast<std::int32_t>(p),
                            score_ranked(tree, rx[static_cast<std::size_t>(i)],
                                         ry[static_cast<std::size_t>(j)]));
    }
  });

  ScoreTable table(n, m);
  for (const TreeScores& scores : per_tree) {
    for (const auto& [i, s] : scores.obs) {
      table.obs_sum[static_cast<std::size_t>(i)] += s;
      table.obs_trees[static_cast<std::size_t>(i)] += 1;
    }
    for (const auto& [p, s] : scores.perm) {
      table.perm_sum[static_cast<std::size_t>(p)] += s;
      table.perm_trees[static_cast<std::size_t>(p)] += 1;
    }
  }
  return table;
}

// Three-way comparison underlying the coefficient.
inline int q_compare(double observed, double permuted) {
  if (observed > permuted) return 1;
  if (observed < permuted) return -1;
  return 0;
}

// rho = (1 / (n*m)) * sum_i sum_p Q(G_obs_i, G_perm_p).  Unscored examples
// contribute ties; the denominator stays n*m regardless.  Computed by sorting
// the permuted scores once, which reproduces the pairwise sign sum exactly.
inline double compute_rho(const ScoreTable& table) {
  const std::int64_t n = table.n();
  const std::int64_t m = table.m();
  detail::require(n >= 1 && m >= 1, "score table must not be empty");

  std::vector<double> permuted;
  permuted.reserve(static_cast<std::size_t>(m));
  for (std::int64_t p = 0; p < m; ++p) {
    if (table.perm_scored(p)) permuted.push_back(table.perm_score(p));
  }
  std::sort(permuted.begin(), permuted.end());

  std::int64_t net = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!table.obs_scored(i)) continue;
    const double g = table.obs_score(i);
    const auto below = std::lower_bound(permuted.begin(), permuted.end(), g) -
                       permuted.begin();
    const auto above = permuted.end() -
                       std::upper_bound(permuted.begin(), permuted.end(), g);
    net += static_cast<std::int64_t>(below) - static_cast<std::int64_t>(above);
  }
  return static_cast<double>(net) /
         (static_cast<double>(n) * static_cast<double>(m));
}

struct UcorrResult {
  double rho = 0.0;
  ScoreTable table;
  ForestConfig config;  // fully resolved configuration actually used
};

// End-to-end coefficient: sample the permuted subset, train and score the
// ensemble, compare aggregated scores.  Depends on raw values only through
// their ranks, so strictly increasing transforms of either axis leave the
// result bit-identical under the same seed.
inline UcorrResult ucorr(const RawSample& sample, const ForestConfig& config) {
  detail::require(sample.xs.size() == sample.ys.size(),
                  "sample columns must have equal length");
  detail::require(sample.size() >= 10,
                  "coefficient needs at least 10 rows (the normal null "
                  "approximation requires n and m above 8)");
  detail::require(detail::all_finite(sample.xs) && detail::all_finite(sample.ys),
                  "sample values must all be finite");

  const auto n = static_cast<std::int32_t>(sample.size());
  const ForestConfig cfg = config.resolved(n);
  Rng subset_rng(derive_seed(cfg.seed, Stream::Subset, 0));
  const PermutedSubset subset = sample_permuted_subset(n, cfg.m, subset_rng);

  UcorrResult result;
  result.table = aggregate_scores(sample, subset, cfg);
  result.rho = compute_rho(result.table);
  result.config = cfg;
  return result;
}

}  // namespace ucorr
