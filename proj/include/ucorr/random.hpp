#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace ucorr {

// ============================================================================
// Deterministic random number generation.
//
// Every stochastic step in the library draws from an explicitly seeded
// xoshiro256** engine.  Worker streams (one per tree, per replicate, ...) are
// derived from a master seed through a fixed counter-based rule, so a run is
// bit-reproducible regardless of how the work is scheduled across threads.
// ============================================================================

// SplitMix64 finalizer; full-avalanche 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Purpose tags keeping derived streams disjoint across pipeline stages.
enum class Stream : std::uint64_t {
  Tree = 1,          // per-tree bootstrap + split sampling
  Subset = 2,        // permuted-pair subset draw
  Shuffle = 3,       // per-replicate permutation shuffles
  Replicate = 4,     // per-replicate forest seeds
  Generate = 5,      // synthetic data generation
  PowerData = 6,     // power study: data per (noise level, rep)
  PowerAlt = 7,      // power study: coefficient seed on observed data
  PowerShuffle = 8,  // power study: null shuffle
  PowerNull = 9,     // power study: coefficient seed on shuffled data
  NullData = 10,     // null-distribution study: data per rep
  NullForest = 11,   // null-distribution study: forest seed per rep
};

// Counter-based stream derivation: child = mix(mix(master + C1*(tag+1)) + C2*(index+1)).
// Same (master, tag, index) always yields the same child seed, independent of
// call order, which is what makes parallel and serial runs identical.
constexpr std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                    std::uint64_t index) noexcept {
  const std::uint64_t h =
      mix64(master + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(stream) + 1));
  return mix64(h + 0xd1b54a32d192ed03ULL * (index + 1));
}

// xoshiro256** engine with SplitMix64 state expansion.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept {
    std::uint64_t s = seed;
    for (auto& word : state_) {
      s += 0x9e3779b97f4a7c15ULL;
      word = mix64(s);
    }
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Unbiased draw from [0, bound) via Lemire's multiply-reject method.
  std::uint64_t next_below(std::uint64_t bound) noexcept {
    unsigned __int128 product =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(bound);
    auto low = static_cast<std::uint64_t>(product);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        product = static_cast<unsigned __int128>(next_u64()) *
                  static_cast<unsigned __int128>(bound);
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::uint64_t>(product >> 64);
  }

  // Inclusive integer draw from [lo, hi].
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) noexcept {
    return lo + static_cast<std::int64_t>(
                    next_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_real01() noexcept { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [-1, 1).
  double next_symmetric() noexcept { return 2.0 * next_real01() - 1.0; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle_in_place(std::vector<T>& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace ucorr
