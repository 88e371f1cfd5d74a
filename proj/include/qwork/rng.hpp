// rng.hpp -- counter-based splittable pseudo-random streams.
//
// The generator is the SplitMix64 finalizer applied to a Weyl sequence:
// output k of a stream with base b is mix64(b + (k+1)*GAMMA).  Every output
// is a pure function of (base, counter), so a stream can be evaluated out of
// order, resumed, or handed to another thread without shared state.
//
// Splitting rule (this is the documented contract -- results of every
// sampling routine depend only on it and on the draw counts):
//   root(seed)   : base = mix64(seed)
//   s.child(i)   : base' = mix64(s.base ^ mix64((i+1) * GAMMA))
// Children of distinct indices, and parents vs. children, yield streams
// whose outputs are decorrelated by the 64-bit avalanche of mix64.

#pragma once

#include <cstdint>

namespace qwork {

namespace detail {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

// Stafford variant 13 / SplitMix64 finalizer: full-avalanche bijection.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class SplitStream {
 public:
  explicit SplitStream(std::uint64_t seed) : base_(detail::mix64(seed)) {}

  // Independent sub-stream keyed by index; see the splitting rule above.
  SplitStream child(std::uint64_t index) const {
    SplitStream s(0);
    s.base_ = detail::mix64(base_ ^ detail::mix64((index + 1) * detail::kGamma));
    s.counter_ = 0;
    return s;
  }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(base_ + counter_ * detail::kGamma);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t base() const { return base_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

}  // namespace qwork
