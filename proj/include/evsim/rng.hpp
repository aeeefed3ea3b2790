#ifndef EVSIM_RNG_HPP_
#define EVSIM_RNG_HPP_

#include <cstdint>
#include <random>

namespace evsim {

// SplitMix64 finalizer. Used both as a seed expander and as the
// pseudorandom function behind slice hashing and page-table placement.
constexpr uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Derive an independent stream seed from a master seed and a path of
// indexes, e.g. derive_seed(master, n_index, trial).
constexpr uint64_t derive_seed(uint64_t master) { return mix64(master); }

template <typename... Rest>
constexpr uint64_t derive_seed(uint64_t master, uint64_t first, Rest... rest) {
  return derive_seed(mix64(master ^ mix64(first + 0x632be59bd9b4e019ull)), rest...);
}

using Rng = std::mt19937_64;

// Uniform integer in [0, bound). Multiply-shift keeps results identical
// across standard library implementations, unlike uniform_int_distribution.
inline uint64_t uniform_below(Rng& rng, uint64_t bound) {
  return static_cast<uint64_t>((static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

// Uniform double in [0, 1).
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename Container>
void shuffle_in_place(Container& c, Rng& rng) {
  for (size_t i = c.size(); i > 1; --i) {
    size_t j = uniform_below(rng, i);
    using std::swap;
    swap(c[i - 1], c[j]);
  }
}

}  // namespace evsim

#endif  // EVSIM_RNG_HPP_
