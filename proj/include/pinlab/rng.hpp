#pragma once

#include <cstdint>

namespace pinlab {

/// Stateless 64-bit mixer (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t z);

/// Counter-based draw: a pure function of (seed, stream, index). Any partition of
/// the index range across workers reproduces the serial stream.
std::uint64_t counter_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Uniform double in [0, 1) with 53 random bits.
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Sequential view over one counter stream.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t start = 0)
      : seed_(seed), stream_(stream), counter_(start) {}

  std::uint64_t next_u64() { return counter_draw(seed_, stream_, counter_++); }
  double uniform() { return counter_uniform(seed_, stream_, counter_++); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (consumes two draws).
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
};

// Stream identifiers keep independent consumers of one seed apart.
namespace streams {
inline constexpr std::uint64_t kSubdivision = 0x5eed0001;
inline constexpr std::uint64_t kSampling = 0x5eed0002;
inline constexpr std::uint64_t kProbes = 0x5eed0003;
inline constexpr std::uint64_t kPairs = 0x5eed0004;
inline constexpr std::uint64_t kPins = 0x5eed0005;
inline constexpr std::uint64_t kTuples = 0x5eed0006;
inline constexpr std::uint64_t kFields = 0x5eed0007;
inline constexpr std::uint64_t kChain = 0x5eed0008;
}  // namespace streams

}  // namespace pinlab
