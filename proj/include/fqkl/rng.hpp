#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fqkl {

/// splitmix64 finalizer. Pure bit arithmetic, so the stream is identical on
/// every platform and compiler.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child-seed derivation: mixes a base seed with one or two stream labels.
/// Children depend only on (seed, labels), never on how much of the parent
/// stream has been consumed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label) {
  return mix64(mix64(seed) ^ mix64(label + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

// Labels for the fixed top-level streams hanging off the experiment seed.
// Every component that derives a child stream uses one of these, so a run is
// fully determined by the single experiment seed.
namespace seed_stream {
inline constexpr std::uint64_t kData = 1;       // synthetic generation
inline constexpr std::uint64_t kSplit = 2;      // train/test split
inline constexpr std::uint64_t kPartition = 3;  // client sharding
inline constexpr std::uint64_t kInit = 4;       // parameter initialization
inline constexpr std::uint64_t kClient = 5;     // per-(client, round) training
}  // namespace seed_stream

/// Counter-free splitmix64 generator with cheap splittable children.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed0_(seed), state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (no cached spare, draw order stays simple).
  double normal();

  /// Uniform index in [0, n); n must be > 0.
  std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  /// Fisher-Yates shuffle driven by this stream.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Child stream for `label`, derived from the construction-time seed.
  Rng child(std::uint64_t label) const { return Rng(derive_seed(seed0_, label)); }

  std::uint64_t seed() const { return seed0_; }

 private:
  std::uint64_t seed0_;
  std::uint64_t state_;
};

}  // namespace fqkl
