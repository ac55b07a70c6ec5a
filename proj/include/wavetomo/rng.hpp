#ifndef WAVETOMO_RNG_HPP
#define WAVETOMO_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace wavetomo {

// splitmix64 finalizer; used both for hashing and for seed derivation.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t seed_chain(uint64_t base, uint64_t a) { return mix64(base ^ mix64(a)); }
inline uint64_t seed_chain(uint64_t base, uint64_t a, uint64_t b) {
  return seed_chain(seed_chain(base, a), b);
}

// Deterministic draws on top of mt19937_64. The engine is fully specified by
// the standard; the distributions here are hand-rolled so streams are bitwise
// reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds; modulo bias is below 1e-18 for the spans used here
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(eng_() % static_cast<uint64_t>(hi - lo + 1));
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  int rademacher() { return (eng_() & 1u) ? 1 : -1; }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace wavetomo

#endif
