#pragma once

#include <cstdint>
#include <random>

namespace sfc {

// splitmix64 step, used to derive independent stream seeds from one base seed.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4a285296374a9ULL;
  return z ^ (z >> 31);
}

// Stable seed for a named RNG stream. Every consumer of randomness draws from
// its own stream so that toggling one feature never shifts another's draws.
inline uint64_t stream_seed(uint64_t base, uint64_t stream_id) {
  uint64_t s = base ^ (0x51ed2701a3c5e791ULL * (stream_id + 1));
  uint64_t a = splitmix64(s);
  uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

enum : uint64_t {
  kStreamInit = 1,
  kStreamGeometry = 2,
  kStreamPhotometric = 3,
  kStreamBatch = 4,
  kStreamQueue = 5,
  kStreamScene = 6,
};

using Rng = std::mt19937_64;

inline Rng make_stream(uint64_t base, uint64_t stream_id) {
  return Rng(stream_seed(base, stream_id));
}

}  // namespace sfc
