#pragma once

#include <cstdint>

namespace gridrisk {

// Counter-based generator: SplitMix64 finalizer applied to (key, counter).
// Every draw is addressable, so independent streams never need to share
// mutable state and replays are exact regardless of call order.
inline uint64_t splitmix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream)
      : key_(splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * (stream + 1)))) {}

  uint64_t next_u64() { return splitmix64(key_ ^ counter_++); }

  // Uniform in the open interval (0,1); safe as a copula/inverse-CDF input.
  double next_uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  void skip_to(uint64_t counter) { counter_ = counter; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace gridrisk
