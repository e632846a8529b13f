#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <queue>
#include <span>
#include <vector>

#include "ucorr/random.hpp"
#include "ucorr/rank_space.hpp"

namespace ucorr {

// ============================================================================
// Second-order partitioning trees.
//
// A tree carves the rank grid (0, n] x (0, n] into rectangular leaves to
// separate the n observed points from the n*n virtual permuted points.  Each
// split is anchored at one interior grid point and can take one of seven
// shapes; permuted counts come from rectangle areas, so only the observed
// points are ever touched.  Leaves are split greedily, always the leaf whose
// cached best candidate has the globally largest gain.
// ============================================================================

// The seven ways a rectangle can be carved around one interior point (a, b).
// Vertical / Horizontal are one-axis cuts.  Quad takes all four quadrants.
// The T shapes cut one axis across the full rectangle and the other axis on
// one side only: TLeft/TRight cut x fully and y on the left/right half;
// TBottom/TTop cut y fully and x on the bottom/top half.
enum class SplitWay : std::uint8_t {
  Vertical,
  Horizontal,
  Quad,
  TLeft,
  TRight,
  TBottom,
  TTop,
};

inline constexpr std::array<SplitWay, 7> kAllSplitWays = {
    SplitWay::Vertical, SplitWay::Horizontal, SplitWay::Quad,    SplitWay::TLeft,
    SplitWay::TRight,   SplitWay::TBottom,    SplitWay::TTop,
};

constexpr int part_count(SplitWay way) noexcept {
  switch (way) {
    case SplitWay::Vertical:
    case SplitWay::Horizontal:
      return 2;
    case SplitWay::Quad:
      return 4;
    default:
      return 3;
  }
}

enum class SplitCriterion : std::uint8_t { GiniGain, SemiRandom };

struct TreeConfig {
  std::int32_t max_leaf_count = 2;   // growth stops once the leaf count reaches this
  std::int32_t split_trial_count = 10;  // candidate points drawn per leaf
  Rank min_leaf_width = 1;           // minimum rank span of any part, both axes
  double omega = 0.0;                // permuted-class weight; 1/n in this problem
  SplitCriterion criterion = SplitCriterion::GiniGain;
};

// One example in rank space.
struct RankPoint {
  Rank x = 0;
  Rank y = 0;
};

// Observed-example counts in the four quadrants around a candidate point
// (a, b): lo/hi on x crossed with lo/hi on y.  Counted once per point and
// reused by all seven shapes.
struct QuadrantCounts {
  std::int32_t lo_lo = 0;  // x <= a, y <= b
  std::int32_t hi_lo = 0;  // x >  a, y <= b
  std::int32_t lo_hi = 0;  // x <= a, y >  b
  std::int32_t hi_hi = 0;  // x >  a, y >  b

  std::int32_t total() const noexcept { return lo_lo + hi_lo + lo_hi + hi_hi; }
};

struct SplitCandidate {
  Rank split_x = 0;
  Rank split_y = 0;
  SplitWay way = SplitWay::Vertical;
  QuadrantCounts obs;
  double gain = 0.0;
};

struct TreeNode {
  Rect rect;
  std::int32_t first_child = -1;  // children are stored contiguously
  std::uint8_t child_count = 0;   // 0 (leaf) or 2..4
  std::int32_t n_obs = 0;         // observed examples inside rect
  double label = 0.0;             // weighted observed share, in [0, 1]

  bool is_leaf() const noexcept { return child_count == 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  Rank n = 0;                   // rank-grid side length

  const TreeNode& root() const { return nodes.front(); }
  std::int32_t leaf_count() const {
    std::int32_t count = 0;
    for (const auto& node : nodes) count += node.is_leaf() ? 1 : 0;
    return count;
  }
};

// Two-class Gini impurity with the second class downweighted by omega:
// 2 * (n_obs / w) * (omega * n_perm / w) with w = n_obs + omega * n_perm.
// Ranges over [0, 0.5]; an empty set scores 0.
inline double gini_impurity(std::int64_t n_obs, std::int64_t n_perm, double omega) {
  const double weighted_perm = omega * static_cast<double>(n_perm);
  const double w = static_cast<double>(n_obs) + weighted_perm;
  if (w <= 0.0) return 0.0;
  return 2.0 * (static_cast<double>(n_obs) / w) * (weighted_perm / w);
}

namespace detail {

// Weighted size times impurity of one part, with omega = 1/n carried
// symbolically:  2*A*(P/n) / (A + P/n)  ==  2*A*P / (n*A + P).
// All products are integers that stay exact in doubles for any practical n,
// which is what makes one-axis root gains cancel to exactly zero.
inline double gini_mass(std::int64_t n_obs, std::int64_t n_perm, std::int64_t n) {
  const double numerator =
      2.0 * static_cast<double>(n_obs) * static_cast<double>(n_perm);
  if (numerator == 0.0) return 0.0;
  return numerator /
         (static_cast<double>(n) * static_cast<double>(n_obs) +
          static_cast<double>(n_perm));
}

// Leaf label: weighted share of observed examples,
// A / (A + P/n) == n*A / (n*A + P).  A leaf that never split and covers the
// whole grid scores n*n / (n*n + n*n) = 1/2.
inline double leaf_label(std::int64_t n_obs, std::int64_t n_perm, std::int64_t n) {
  const double numerator = static_cast<double>(n) * static_cast<double>(n_obs);
  const double denominator = numerator + static_cast<double>(n_perm);
  if (denominator == 0.0) return 0.0;
  return numerator / denominator;
}

}  // namespace detail

struct SplitPart {
  Rect rect;
  std::int32_t n_obs = 0;
};

// Expands a candidate into its parts, in a fixed deterministic order.
// Returns the number of parts written to `out`.
inline int decompose_split(const Rect& r, const SplitCandidate& c,
                           std::array<SplitPart, 4>& out) {
  const Rank a = c.split_x;
  const Rank b = c.split_y;
  const QuadrantCounts& q = c.obs;
  const Rect lb{r.x_lo, a, r.y_lo, b};
  const Rect rb{a, r.x_hi, r.y_lo, b};
  const Rect lt{r.x_lo, a, b, r.y_hi};
  const Rect rt{a, r.x_hi, b, r.y_hi};
  const Rect left{r.x_lo, a, r.y_lo, r.y_hi};
  const Rect right{a, r.x_hi, r.y_lo, r.y_hi};
  const Rect bottom{r.x_lo, r.x_hi, r.y_lo, b};
  const Rect top{r.x_lo, r.x_hi, b, r.y_hi};
  switch (c.way) {
    case SplitWay::Vertical:
      out[0] = {left, q.lo_lo + q.lo_hi};
      out[1] = {right, q.hi_lo + q.hi_hi};
      return 2;
    case SplitWay::Horizontal:
      out[0] = {bottom, q.lo_lo + q.hi_lo};
      out[1] = {top, q.lo_hi + q.hi_hi};
      return 2;
    case SplitWay::Quad:
      out[0] = {lb, q.lo_lo};
      out[1] = {rb, q.hi_lo};
      out[2] = {lt, q.lo_hi};
      out[3] = {rt, q.hi_hi};
      return 4;
    case SplitWay::TLeft:
      out[0] = {lb, q.lo_lo};
      out[1] = {lt, q.lo_hi};
      out[2] = {right, q.hi_lo + q.hi_hi};
      return 3;
    case SplitWay::TRight:
      out[0] = {left, q.lo_lo + q.lo_hi};
      out[1] = {rb, q.hi_lo};
      out[2] = {rt, q.hi_hi};
      return 3;
    case SplitWay::TBottom:
      out[0] = {lb, q.lo_lo};
      out[1] = {rb, q.hi_lo};
      out[2] = {top, q.lo_hi + q.hi_hi};
      return 3;
    case SplitWay::TTop:
      out[0] = {bottom, q.lo_lo + q.hi_lo};
      out[1] = {lt, q.lo_hi};
      out[2] = {rt, q.hi_hi};
      return 3;
  }
  return 0;
}

// Impurity gain of a candidate split, normalized by 2/|parts|:
// (2/k) * [mass(parent) - sum_j mass(part_j)] with mass = weighted size times
// impurity at omega = 1/n.  Can be negative; the greedy loop still takes the
// global maximum.
inline double delta_gini(const Rect& rect, const SplitCandidate& cand, std::int64_t n) {
  std::array<SplitPart, 4> parts;
  const int k = decompose_split(rect, cand, parts);
  double children = 0.0;
  for (int i = 0; i < k; ++i) {
    children += detail::gini_mass(parts[i].n_obs, permuted_count(parts[i].rect), n);
  }
  const double parent = detail::gini_mass(cand.obs.total(), permuted_count(rect), n);
  return (2.0 / k) * (parent - children);
}

// Semi-random gain: (2/|parts|) * gamma * sqrt(weighted node size), with
// gamma drawn uniformly from [0, 1) per candidate.  Ignores the candidate's
// actual separation quality apart from shape arity.
inline double delta_rand_with_gamma(SplitWay way, double node_weighted_size,
                                    double gamma) {
  return (2.0 / part_count(way)) * gamma * std::sqrt(node_weighted_size);
}

inline double delta_rand(SplitWay way, double node_weighted_size, Rng& rng) {
  return delta_rand_with_gamma(way, node_weighted_size, rng.next_real01());
}

// Draws trial_count candidate points and expands each into every legal shape.
// Cut positions are sampled on integer rank coordinates uniformly over the
// positions leaving at least min_leaf_width of span on both sides of the cut
// axis; an axis whose span is below 2 * min_leaf_width admits no cut, so only
// the shapes that leave it untouched are emitted.  Per candidate point the
// four quadrant counts are computed in one pass over the node's observed
// points and shared by all seven shapes.
inline std::vector<SplitCandidate> enumerate_candidates(
    const Rect& rect, std::span<const RankPoint> pts, std::int32_t trial_count,
    Rank min_leaf_width, Rng& rng) {
  const Rank w = min_leaf_width;
  const bool x_ok = rect.width() >= 2 * w;
  const bool y_ok = rect.height() >= 2 * w;
  std::vector<SplitCandidate> candidates;
  if (!x_ok && !y_ok) return candidates;
  candidates.reserve(static_cast<std::size_t>(trial_count) * (x_ok && y_ok ? 7 : 1));

  for (std::int32_t trial = 0; trial < trial_count; ++trial) {
    const Rank a =
        x_ok ? static_cast<Rank>(rng.next_int(rect.x_lo + w, rect.x_hi - w))
             : rect.x_hi;
    const Rank b =
        y_ok ? static_cast<Rank>(rng.next_int(rect.y_lo + w, rect.y_hi - w))
             : rect.y_hi;
    QuadrantCounts q;
    for (const RankPoint& p : pts) {
      if (p.x <= a) {
        (p.y <= b ? q.lo_lo : q.lo_hi) += 1;
      } else {
        (p.y <= b ? q.hi_lo : q.hi_hi) += 1;
      }
    }
    const auto emit = [&](SplitWay way) {
      candidates.push_back(SplitCandidate{a, b, way, q, 0.0});
    };
    if (x_ok && y_ok) {
      for (SplitWay way : kAllSplitWays) emit(way);
    } else if (x_ok) {
      emit(SplitWay::Vertical);
    } else {
      emit(SplitWay::Horizontal);
    }
  }
  return candidates;
}

// Grows one tree over the rank grid of `ranked`.
//
// Each leaf evaluates its candidates once, at creation, and caches only the
// best one (ties by lowest candidate index).  A max-priority queue keyed by
// (gain, then earliest-created leaf) picks the next leaf to split; splits are
// taken even at non-positive gain, and growth stops only when the leaf count
// reaches max_leaf_count or no leaf has a legal candidate left.
inline DecisionTree train_tree(const RankedSample& ranked, const TreeConfig& cfg,
                               Rng& rng) {
  detail::require(cfg.max_leaf_count >= 2, "max_leaf_count must be at least 2");
  detail::require(cfg.split_trial_count >= 1, "split_trial_count must be at least 1");
  detail::require(cfg.min_leaf_width >= 1, "min_leaf_width must be at least 1");
  detail::require(cfg.omega > 0.0, "omega must be positive");
  detail::require(ranked.n >= 2 && ranked.rx.size() == ranked.ry.size() &&
                      static_cast<Rank>(ranked.rx.size()) == ranked.n,
                  "ranked sample must hold n >= 2 rows");

  const Rank n = ranked.n;
  DecisionTree tree;
  tree.n = n;
  tree.nodes.reserve(static_cast<std::size_t>(2 * cfg.max_leaf_count));

  struct LeafState {
    std::int32_t node = -1;
    std::vector<RankPoint> pts;
    SplitCandidate best;
  };
  struct HeapEntry {
    double gain = 0.0;
    std::int64_t seq = 0;
    std::int32_t state = -1;
  };
  const auto heap_less = [](const HeapEntry& a, const HeapEntry& b) {
    if (a.gain != b.gain) return a.gain < b.gain;
    return a.seq > b.seq;  // equal gain: earliest-created leaf wins
  };
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, decltype(heap_less)> heap(
      heap_less);
  std::vector<LeafState> states;
  std::int64_t next_seq = 0;

  const auto add_node = [&](const Rect& rect, std::int32_t n_obs) {
    TreeNode node;
    node.rect = rect;
    node.n_obs = n_obs;
    node.label = detail::leaf_label(n_obs, permuted_count(rect), n);
    tree.nodes.push_back(node);
    return static_cast<std::int32_t>(tree.nodes.size() - 1);
  };

  // Evaluates a fresh leaf: enumerate candidates, score them under the tree's
  // criterion, cache the best.  Leaves with no legal candidate stay terminal.
  const auto consider_leaf = [&](std::int32_t node_index,
                                 std::vector<RankPoint>&& pts) {
    const Rect rect = tree.nodes[static_cast<std::size_t>(node_index)].rect;
    auto candidates =
        enumerate_candidates(rect, pts, cfg.split_trial_count, cfg.min_leaf_width, rng);
    if (candidates.empty()) return;
    const double weighted_size =
        (static_cast<double>(n) * static_cast<double>(pts.size()) +
         static_cast<double>(permuted_count(rect))) /
        static_cast<double>(n);
    std::size_t best = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      SplitCandidate& cand = candidates[i];
      cand.gain = cfg.criterion == SplitCriterion::GiniGain
                      ? delta_gini(rect, cand, n)
                      : delta_rand(cand.way, weighted_size, rng);
      if (cand.gain > candidates[best].gain) best = i;
    }
    states.push_back(LeafState{node_index, std::move(pts), candidates[best]});
    heap.push(HeapEntry{candidates[best].gain, next_seq++,
                        static_cast<std::int32_t>(states.size() - 1)});
  };

  std::vector<RankPoint> root_pts(static_cast<std::size_t>(n));
  for (Rank i = 0; i < n; ++i) {
    root_pts[static_cast<std::size_t>(i)] =
        RankPoint{ranked.rx[static_cast<std::size_t>(i)],
                  ranked.ry[static_cast<std::size_t>(i)]};
  }
  const std::int32_t root = add_node(Rect{0, n, 0, n}, n);
  std::int32_t leaf_count = 1;
  consider_leaf(root, std::move(root_pts));

  while (leaf_count < cfg.max_leaf_count && !heap.empty()) {
    const HeapEntry entry = heap.top();
    heap.pop();
    LeafState state = std::move(states[static_cast<std::size_t>(entry.state)]);

    std::array<SplitPart, 4> parts;
    const int k =
        decompose_split(tree.nodes[static_cast<std::size_t>(state.node)].rect,
                        state.best, parts);

    std::array<std::vector<RankPoint>, 4> child_pts;
    for (int i = 0; i < k; ++i) {
      child_pts[static_cast<std::size_t>(i)].reserve(
          static_cast<std::size_t>(parts[static_cast<std::size_t>(i)].n_obs));
    }
    for (const RankPoint& p : state.pts) {
      for (int i = 0; i < k; ++i) {
        if (parts[static_cast<std::size_t>(i)].rect.contains(p.x, p.y)) {
          child_pts[static_cast<std::size_t>(i)].push_back(p);
          break;
        }
      }
    }

    const auto first = static_cast<std::int32_t>(tree.nodes.size());
    for (int i = 0; i < k; ++i) {
      assert(static_cast<std::int32_t>(child_pts[static_cast<std::size_t>(i)].size()) ==
             parts[static_cast<std::size_t>(i)].n_obs);
      add_node(parts[static_cast<std::size_t>(i)].rect,
               parts[static_cast<std::size_t>(i)].n_obs);
    }
    tree.nodes[static_cast<std::size_t>(state.node)].first_child = first;
    tree.nodes[static_cast<std::size_t>(state.node)].child_count =
        static_cast<std::uint8_t>(k);
    leaf_count += k - 1;

    for (int i = 0; i < k; ++i) {
      consider_leaf(first + i, std::move(child_pts[static_cast<std::size_t>(i)]));
    }
  }
  return tree;
}

// Label of the leaf containing an integer rank point.  The point must lie in
// the root region (0, n] x (0, n].
inline double score_ranked(const DecisionTree& tree, Rank rx, Rank ry) {
  assert(tree.root().rect.contains(rx, ry));
  const TreeNode* current = &tree.nodes.front();
  while (!current->is_leaf()) {
    const TreeNode* next = nullptr;
    for (int i = 0; i < current->child_count; ++i) {
      const TreeNode& child =
          tree.nodes[static_cast<std::size_t>(current->first_child + i)];
      if (child.rect.contains(rx, ry)) {
        next = &child;
        break;
      }
    }
    assert(next != nullptr);  // children partition the parent rectangle
    current = next;
  }
  return current->label;
}

// Scores a raw-space point: both coordinates are ranked through the tree's
// own rank maps, a rank of 0 (above every training value) is clamped to 1,
// and the containing leaf's label is returned.
inline double score_point(const DecisionTree& tree, const RankMap& xmap,
                          const RankMap& ymap, double x, double y) {
  detail::require(std::isfinite(x) && std::isfinite(y),
                  "scored points must be finite");
  return score_ranked(tree, clamped_rank(xmap, x), clamped_rank(ymap, y));
}

}  // namespace ucorr
