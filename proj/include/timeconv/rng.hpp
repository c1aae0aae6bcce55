#pragma once

#include <cstdint>
#include <utility>

namespace tcn {

// Deterministic 64-bit generator (splitmix64, Steele et al.). The sequence is
// a pure function of the seed: no platform, compiler, or standard-library
// dependence. Every seeded code path in the library draws from this.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1), 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0,n). Fixed-point multiply (Lemire) so the mapping is
  // identical everywhere; the bias for n << 2^64 is negligible.
  uint64_t below(uint64_t n) {
    return uint64_t((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates.
  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      const uint64_t j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  // Derive an independent substream, e.g. one per sample or per epoch.
  Rng fork(uint64_t salt) {
    uint64_t z = (salt + 1) * 0xd1342543de82ef95ull;
    return Rng(next_u64() ^ z);
  }

 private:
  uint64_t state_;
};

// Stateless mix of several values into one seed; used to give (class, index)
// pairs reproducible substreams independent of draw order.
inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0) {
  Rng r(a ^ (b * 0x9e3779b97f4a7c15ull) ^ (c * 0xd1342543de82ef95ull));
  return r.next_u64();
}

}  // namespace tcn
