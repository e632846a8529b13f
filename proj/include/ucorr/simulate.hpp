#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ucorr/forest.hpp"
#include "ucorr/inference.hpp"
#include "ucorr/parallel.hpp"
#include "ucorr/random.hpp"
#include "ucorr/rank_space.hpp"

namespace ucorr {

// ============================================================================
// Synthetic relationships, baseline coefficients, and study harnesses.
// ============================================================================

enum class RelationshipKind : std::uint8_t {
  Independent,
  Linear,
  Parabola,
  Sine,
  Circle,
  Cross,
  Checkerboard,
};

inline constexpr std::array<RelationshipKind, 7> kAllRelationshipKinds = {
    RelationshipKind::Independent, RelationshipKind::Linear,
    RelationshipKind::Parabola,    RelationshipKind::Sine,
    RelationshipKind::Circle,      RelationshipKind::Cross,
    RelationshipKind::Checkerboard,
};

inline const char* relationship_name(RelationshipKind kind) {
  switch (kind) {
    case RelationshipKind::Independent: return "independent";
    case RelationshipKind::Linear: return "linear";
    case RelationshipKind::Parabola: return "parabola";
    case RelationshipKind::Sine: return "sine";
    case RelationshipKind::Circle: return "circle";
    case RelationshipKind::Cross: return "cross";
    case RelationshipKind::Checkerboard: return "checkerboard";
  }
  return "unknown";
}

inline std::string relationship_names_joined() {
  std::string joined;
  for (const RelationshipKind kind : kAllRelationshipKinds) {
    if (!joined.empty()) joined += ", ";
    joined += relationship_name(kind);
  }
  return joined;
}

inline RelationshipKind parse_relationship(const std::string& name) {
  for (const RelationshipKind kind : kAllRelationshipKinds) {
    if (name == relationship_name(kind)) return kind;
  }
  throw std::invalid_argument("unknown relation kind '" + name +
                              "'; valid kinds: " + relationship_names_joined());
}

// noise is a percentage of the unit signal amplitude: each noisy coordinate
// receives additive uniform noise on [-noise/100, +noise/100].  Functional
// kinds perturb y only; circle and checkerboard perturb both coordinates.
struct RelationshipSpec {
  RelationshipKind kind = RelationshipKind::Independent;
  std::int32_t n = 0;
  double noise = 0.0;  // percent, 0..100
  std::uint64_t seed = 0;
};

inline RawSample generate(const RelationshipSpec& spec) {
  detail::require(spec.n >= 1, "generation needs n >= 1");
  detail::require(spec.noise >= 0.0 && spec.noise <= 100.0,
                  "noise must lie in [0, 100]");
  Rng rng(derive_seed(spec.seed, Stream::Generate, 0));
  const double s = spec.noise / 100.0;
  constexpr double kTwoPi = 6.28318530717958647692;

  std::vector<double> xs(static_cast<std::size_t>(spec.n));
  std::vector<double> ys(static_cast<std::size_t>(spec.n));
  for (std::int32_t i = 0; i < spec.n; ++i) {
    double x = 0.0;
    double y = 0.0;
    switch (spec.kind) {
      case RelationshipKind::Independent:
        x = rng.next_symmetric();
        y = rng.next_symmetric();
        break;
      case RelationshipKind::Linear:
        x = rng.next_symmetric();
        y = x + s * rng.next_symmetric();
        break;
      case RelationshipKind::Parabola:
        x = rng.next_symmetric();
        y = x * x + s * rng.next_symmetric();
        break;
      case RelationshipKind::Sine:
        x = rng.next_symmetric();
        y = std::sin(2.0 * kTwoPi * x) + s * rng.next_symmetric();
        break;
      case RelationshipKind::Circle: {
        const double theta = kTwoPi * rng.next_real01();
        x = std::cos(theta) + s * rng.next_symmetric();
        y = std::sin(theta) + s * rng.next_symmetric();
        break;
      }
      case RelationshipKind::Cross: {
        x = rng.next_symmetric();
        const double sign = rng.next_below(2) == 0 ? 1.0 : -1.0;
        y = sign * x + s * rng.next_symmetric();
        break;
      }
      case RelationshipKind::Checkerboard: {
        // Alternating cells of a 4x4 grid over [-1, 1]^2 (8 active cells).
        const auto cell = static_cast<std::int32_t>(rng.next_below(8));
        const std::int32_t row = cell / 2;
        const std::int32_t col = 2 * (cell % 2) + row % 2;
        x = -1.0 + 0.5 * (static_cast<double>(col) + rng.next_real01());
        y = -1.0 + 0.5 * (static_cast<double>(row) + rng.next_real01());
        x += s * rng.next_symmetric();
        y += s * rng.next_symmetric();
        break;
      }
    }
    xs[static_cast<std::size_t>(i)] = x;
    ys[static_cast<std::size_t>(i)] = y;
  }
  return RawSample{std::move(xs), std::move(ys)};
}

// ----------------------------------------------------------------------------
// Baseline coefficients.
// ----------------------------------------------------------------------------

inline double pearson(const RawSample& sample) {
  detail::require(sample.xs.size() == sample.ys.size(),
                  "sample columns must have equal length");
  const auto n = static_cast<std::int64_t>(sample.size());
  detail::require(n >= 3, "correlation needs at least 3 rows");
  detail::require(detail::all_finite(sample.xs) && detail::all_finite(sample.ys),
                  "sample values must all be finite");

  const double mean_x =
      std::accumulate(sample.xs.begin(), sample.xs.end(), 0.0) / static_cast<double>(n);
  const double mean_y =
      std::accumulate(sample.ys.begin(), sample.ys.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double dx = sample.xs[static_cast<std::size_t>(i)] - mean_x;
    const double dy = sample.ys[static_cast<std::size_t>(i)] - mean_y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  detail::require(sxx > 0.0 && syy > 0.0,
                  "correlation is undefined for a zero-variance column");
  return sxy / std::sqrt(sxx * syy);
}

// Ascending midranks (ties get the average of their rank positions).
inline std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    return values[static_cast<std::size_t>(a)] < values[static_cast<std::size_t>(b)];
  });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && values[static_cast<std::size_t>(order[j])] ==
                        values[static_cast<std::size_t>(order[i])]) {
      ++j;
    }
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      ranks[static_cast<std::size_t>(order[k])] = midrank;
    }
    i = j;
  }
  return ranks;
}

// Spearman rank correlation: Pearson on midranks.
inline double spearman(const RawSample& sample) {
  detail::require(sample.xs.size() == sample.ys.size(),
                  "sample columns must have equal length");
  detail::require(sample.size() >= 3, "correlation needs at least 3 rows");
  detail::require(detail::all_finite(sample.xs) && detail::all_finite(sample.ys),
                  "sample values must all be finite");
  return pearson(RawSample{midranks(sample.xs), midranks(sample.ys)});
}

enum class Coefficient : std::uint8_t { UCorr, Pearson, Spearman };

inline const char* coefficient_name(Coefficient coeff) {
  switch (coeff) {
    case Coefficient::UCorr: return "ucorr";
    case Coefficient::Pearson: return "pearson";
    case Coefficient::Spearman: return "spearman";
  }
  return "unknown";
}

inline Coefficient parse_coefficient(const std::string& name) {
  if (name == "ucorr") return Coefficient::UCorr;
  if (name == "pearson") return Coefficient::Pearson;
  if (name == "spearman") return Coefficient::Spearman;
  throw std::invalid_argument("unknown coefficient '" + name +
                              "'; valid coefficients: ucorr, pearson, spearman");
}

namespace detail {

inline double coefficient_value(Coefficient coeff, const RawSample& sample,
                                std::uint64_t forest_seed,
                                const ForestConfig& forest) {
  switch (coeff) {
    case Coefficient::UCorr: {
      ForestConfig cfg = forest;
      cfg.seed = forest_seed;
      cfg.threads = 1;  // parallelism lives at the replicate level
      return ucorr(sample, cfg).rho;
    }
    case Coefficient::Pearson:
      return pearson(sample);
    case Coefficient::Spearman:
      return spearman(sample);
  }
  return 0.0;
}

}  // namespace detail

// Nearest-rank quantile of a sorted vector.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  detail::require(!sorted.empty(), "quantile of an empty set");
  const auto size = static_cast<std::int64_t>(sorted.size());
  auto idx = static_cast<std::int64_t>(
                 std::ceil(p * static_cast<double>(size))) - 1;
  idx = std::clamp<std::int64_t>(idx, 0, size - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

struct PowerPoint {
  RelationshipKind kind = RelationshipKind::Independent;
  double noise = 0.0;
  Coefficient coeff = Coefficient::UCorr;
  std::int32_t reps = 0;
  double power = 0.0;     // share of observed values above the null quantile
  double null_q95 = 0.0;  // empirical 95% quantile of the permuted replicates
};

// Power protocol: per replicate, generate one dataset, evaluate the
// coefficient on it and on a y-shuffled copy.  The rejection threshold at each
// noise level is the empirical 95% quantile of the shuffled values, from the
// same number of replicates; power is the share of observed values strictly
// above it.
inline std::vector<PowerPoint> power_experiment(
    RelationshipKind kind, std::int32_t n, std::span<const double> noise_grid,
    std::int32_t reps, Coefficient coeff, const ForestConfig& forest,
    std::uint64_t seed) {
  detail::require(reps >= 50, "power experiment needs at least 50 replicates");
  detail::require(!noise_grid.empty(), "noise grid must not be empty");

  std::vector<PowerPoint> points;
  points.reserve(noise_grid.size());
  for (std::size_t level = 0; level < noise_grid.size(); ++level) {
    const double noise = noise_grid[level];
    std::vector<double> observed(static_cast<std::size_t>(reps));
    std::vector<double> shuffled(static_cast<std::size_t>(reps));

    parallel_for(reps, forest.threads, [&](std::int64_t r) {
      const std::uint64_t key =
          (static_cast<std::uint64_t>(level) << 32) | static_cast<std::uint64_t>(r);
      const RawSample data = generate(
          {kind, n, noise, derive_seed(seed, Stream::PowerData, key)});
      observed[static_cast<std::size_t>(r)] = detail::coefficient_value(
          coeff, data, derive_seed(seed, Stream::PowerAlt, key), forest);

      RawSample null_data = data;
      Rng shuffle_rng(derive_seed(seed, Stream::PowerShuffle, key));
      shuffle_in_place(null_data.ys, shuffle_rng);
      shuffled[static_cast<std::size_t>(r)] = detail::coefficient_value(
          coeff, null_data, derive_seed(seed, Stream::PowerNull, key), forest);
    });

    std::sort(shuffled.begin(), shuffled.end());
    const double q95 = quantile_sorted(shuffled, 0.95);
    const auto above = std::count_if(observed.begin(), observed.end(),
                                     [&](double v) { return v > q95; });
    points.push_back(PowerPoint{kind, noise, coeff, reps,
                                static_cast<double>(above) / static_cast<double>(reps),
                                q95});
  }
  return points;
}

struct NullDistSummary {
  std::int32_t n = 0;
  std::int64_t m = 0;
  std::int32_t reps = 0;
  double mean = 0.0;
  double stddev = 0.0;           // sample standard deviation
  double sigma_predicted = 0.0;  // analytic null sigma for comparison
  std::vector<double> rhos;      // sorted replicate values
  std::vector<double> bin_edges; // bins + 1 edges
  std::vector<std::int64_t> bin_counts;

  double quantile(double p) const { return quantile_sorted(rhos, p); }
};

// Empirical null distribution of the coefficient on independent data.
inline NullDistSummary null_dist_experiment(std::int32_t n, std::int64_t m,
                                            std::int32_t reps, std::uint64_t seed,
                                            std::int32_t bins = 40,
                                            const ForestConfig& forest = {},
                                            double k_bias = 0.5) {
  detail::require(reps >= 200,
                  "null distribution experiment needs at least 200 replicates");
  detail::require(bins >= 1, "bin count must be positive");

  NullDistSummary summary;
  summary.n = n;
  summary.m = m;
  summary.reps = reps;
  summary.rhos.assign(static_cast<std::size_t>(reps), 0.0);

  parallel_for(reps, forest.threads, [&](std::int64_t r) {
    const RawSample data =
        generate({RelationshipKind::Independent, n, 0.0,
                  derive_seed(seed, Stream::NullData, static_cast<std::uint64_t>(r))});
    ForestConfig cfg = forest;
    cfg.m = m;
    cfg.seed = derive_seed(seed, Stream::NullForest, static_cast<std::uint64_t>(r));
    cfg.threads = 1;
    summary.rhos[static_cast<std::size_t>(r)] = ucorr(data, cfg).rho;
  });

  const double mean =
      std::accumulate(summary.rhos.begin(), summary.rhos.end(), 0.0) /
      static_cast<double>(reps);
  double ss = 0.0;
  for (const double v : summary.rhos) ss += (v - mean) * (v - mean);
  summary.mean = mean;
  summary.stddev = std::sqrt(ss / static_cast<double>(reps - 1));
  summary.sigma_predicted = std::sqrt(null_variance(n, m, k_bias));

  std::sort(summary.rhos.begin(), summary.rhos.end());
  double lo = summary.rhos.front();
  double hi = summary.rhos.back();
  if (lo == hi) {  // degenerate spread still gets a well-formed histogram
    lo -= 1e-9;
    hi += 1e-9;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  summary.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (std::int32_t b = 0; b <= bins; ++b) {
    summary.bin_edges[static_cast<std::size_t>(b)] = lo + width * b;
  }
  summary.bin_edges.back() = hi;
  summary.bin_counts.assign(static_cast<std::size_t>(bins), 0);
  for (const double v : summary.rhos) {
    auto b = static_cast<std::int64_t>((v - lo) / width);
    b = std::clamp<std::int64_t>(b, 0, bins - 1);
    summary.bin_counts[static_cast<std::size_t>(b)] += 1;
  }
  return summary;
}

}  // namespace ucorr
