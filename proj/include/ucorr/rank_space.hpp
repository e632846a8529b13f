#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ucorr {

// ============================================================================
// Rank space.
//
// Both axes of a sample are replaced by descending ranks: the largest value
// maps to rank 1 and the smallest to rank n, so every training sample lives on
// the integer grid (0, n] x (0, n].  Because the per-axis ranks are exact
// permutations of {1..n}, the virtual sample of all n*n cross pairs
// (x_i, y_j) fills that grid completely, and the number of its points inside
// any axis-aligned rank rectangle is just the product of the side lengths.
// No permuted sample is ever materialized.
// ============================================================================

using Rank = std::int32_t;

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

inline bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace detail

// A bivariate sample in raw value space.  Columns have equal length and hold
// only finite values; see make_raw_sample.
struct RawSample {
  std::vector<double> xs;
  std::vector<double> ys;

  std::size_t size() const noexcept { return xs.size(); }
};

inline RawSample make_raw_sample(std::vector<double> xs, std::vector<double> ys) {
  detail::require(xs.size() == ys.size(), "sample columns must have equal length");
  detail::require(!xs.empty(), "sample must contain at least one row");
  detail::require(detail::all_finite(xs) && detail::all_finite(ys),
                  "sample values must all be finite");
  return RawSample{std::move(xs), std::move(ys)};
}

// Monotone map from raw values to descending ranks.  rank_of(v) counts the
// training values that are >= v, so it is n for anything at or below the
// minimum, 1 at the maximum, and 0 strictly above the maximum.
class RankMap {
 public:
  RankMap() = default;

  explicit RankMap(std::vector<double> values) : sorted_(std::move(values)) {
    detail::require(!sorted_.empty(), "rank map needs at least one value");
    detail::require(detail::all_finite(sorted_), "rank map values must all be finite");
    std::sort(sorted_.begin(), sorted_.end());
  }

  Rank size() const noexcept { return static_cast<Rank>(sorted_.size()); }

  Rank rank_of(double v) const {
    detail::require(std::isfinite(v), "rank queries must be finite");
    const auto it = std::lower_bound(sorted_.begin(), sorted_.end(), v);
    return static_cast<Rank>(sorted_.end() - it);
  }

 private:
  std::vector<double> sorted_;
};

inline RankMap build_rank_map(std::span<const double> values) {
  return RankMap(std::vector<double>(values.begin(), values.end()));
}

// Rank used when scoring a point through a trained tree: a query above every
// training value would get rank 0, outside the grid, so it is clamped to 1.
inline Rank clamped_rank(const RankMap& map, double v) {
  return std::max<Rank>(map.rank_of(v), 1);
}

// A training sample with both axes replaced by descending ranks.  rx and ry
// are each exact permutations of {1..n}; ties in raw values are broken by
// ascending original index so duplicates get distinct consecutive ranks.
struct RankedSample {
  std::vector<Rank> rx;
  std::vector<Rank> ry;
  Rank n = 0;
};

inline std::vector<Rank> descending_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  std::vector<Rank> ranks(n);
  for (std::size_t k = 0; k < n; ++k) ranks[order[k]] = static_cast<Rank>(k + 1);
  return ranks;
}

inline RankedSample rank_training_sample(const RawSample& sample) {
  detail::require(sample.xs.size() == sample.ys.size(),
                  "sample columns must have equal length");
  detail::require(sample.size() >= 2, "ranking needs at least two rows");
  detail::require(detail::all_finite(sample.xs) && detail::all_finite(sample.ys),
                  "sample values must all be finite");
  RankedSample ranked;
  ranked.rx = descending_ranks(sample.xs);
  ranked.ry = descending_ranks(sample.ys);
  ranked.n = static_cast<Rank>(sample.size());
  return ranked;
}

// Half-open rank rectangle (x_lo, x_hi] x (y_lo, y_hi] with integer bounds in
// [0, n].  The root region of every tree is (0, n] x (0, n].
struct Rect {
  Rank x_lo = 0;
  Rank x_hi = 0;
  Rank y_lo = 0;
  Rank y_hi = 0;

  Rank width() const noexcept { return x_hi - x_lo; }
  Rank height() const noexcept { return y_hi - y_lo; }

  bool contains(Rank rx, Rank ry) const noexcept {
    return x_lo < rx && rx <= x_hi && y_lo < ry && ry <= y_hi;
  }
};

// Number of virtual permuted points inside the rectangle.  Exact because the
// n*n cross pairs of two rank permutations tile the whole grid.
inline std::int64_t permuted_count(const Rect& rect) {
  return static_cast<std::int64_t>(rect.width()) *
         static_cast<std::int64_t>(rect.height());
}

}  // namespace ucorr
