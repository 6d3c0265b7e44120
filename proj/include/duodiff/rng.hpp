#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace duodiff {

// Deterministic RNG. All randomness in a run flows from one root seed;
// independent substreams are derived by name or index so that changing one
// consumer does not shift the draws seen by another.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(splitmix(seed)) {}

  Rng stream(std::string_view name) const {
    return Rng(splitmix(seed_ ^ fnv1a(name)));
  }
  Rng stream(uint64_t idx) const {
    return Rng(splitmix(seed_ ^ (0x9e3779b97f4a7c15ULL + idx)));
  }

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // [0, n)
  int64_t uniform_int(int64_t n) {
    if (n <= 0) return 0;
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller with one cached value; independent of std library internals.
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cache_ = r * std::sin(theta);
    has_cache_ = true;
    return r * std::cos(theta);
  }
  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  template <typename It>
  void shuffle(It first, It last) {
    const int64_t n = last - first;
    for (int64_t i = n - 1; i > 0; --i) {
      std::swap(first[i], first[uniform_int(i + 1)]);
    }
  }

  uint64_t seed() const { return seed_; }

 private:
  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return h;
  }
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_cache_ = false;
  double cache_ = 0.0;
};

}  // namespace duodiff
