#ifndef BWSHARE_RNG_HPP
#define BWSHARE_RNG_HPP

#include <cstdint>
#include <random>

namespace bwshare {

/// SplitMix64 finalizer; decorrelates nearby seeds (seed ^ run index).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t run = 0) {
  return Engine(splitmix64(seed ^ run));
}

}  // namespace bwshare

#endif  // BWSHARE_RNG_HPP
