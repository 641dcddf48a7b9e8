#pragma once

#include <cmath>
#include <cstdint>

namespace macrotex {

// Deterministic, splittable pseudorandom stream.
//
// The generator is SplitMix64 (Steele, Lea, Flood 2014): a 64-bit counter
// passed through a fixed finalizer. The same seed yields the same sequence
// on every platform because only integer arithmetic and IEEE-754 double
// operations are involved. Substreams are derived by hashing (seed, index),
// so parallel chains get disjoint, reproducible streams.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : state_(seed) {}

  // Next raw 64-bit output.
  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on (0, 1): 53 random mantissa bits, zero excluded.
  double uniform() {
    while (true) {
      double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  // Standard normal draw via Box-Muller. Each call consumes exactly two
  // uniforms; no state is cached, so a "draw" is a well-defined unit.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent stream derived from this stream's seed and an index.
  // Does not advance this stream.
  RandomStream substream(std::uint64_t index) const {
    RandomStream mix(state_ ^ (0x6a09e667f3bcc909ULL + index));
    std::uint64_t derived = mix.next_u64();
    return RandomStream(derived);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace macrotex
