#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace slsr {

// Deterministic random stream. Distributions are implemented by hand on top
// of mt19937_64 raw draws because the std:: distribution objects are allowed
// to differ between standard library implementations; every artifact in the
// pipeline must be reproducible from its seed alone.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t bits() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t index(uint64_t n) {
    // Rejection sampling keeps the draw unbiased for any n.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = bits();
    while (v >= limit) v = bits();
    return v % n;
  }

  int64_t range(int64_t lo, int64_t hi_inclusive) {
    return lo + static_cast<int64_t>(index(static_cast<uint64_t>(hi_inclusive - lo + 1)));
  }

  // Standard normal via Box-Muller; caches the second value.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Named substream derivation: every stage, cluster and record draws from a
// stream keyed by (root seed, tag, index) so results do not depend on the
// order or number of workers touching the corpus.
inline uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t index = 0) {
  uint64_t h = 0xcbf29ce484222325ULL ^ root;
  auto mix = [&h](uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
    h ^= h >> 32;
  };
  for (char c : tag) mix(static_cast<uint64_t>(static_cast<unsigned char>(c)));
  mix(0x9e3779b97f4a7c15ULL);
  mix(index);
  // splitmix64 finalization
  h += 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  return h ^ (h >> 31);
}

}  // namespace slsr
