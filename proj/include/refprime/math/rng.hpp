#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace refprime {

// All randomness in a run is derived from one root seed through labeled
// streams, so that any component can be replayed in isolation.
uint64_t splitmix64(uint64_t x);

// Derive a child seed from a parent seed and a stream label.
uint64_t derive_seed(uint64_t parent, std::string_view label);
uint64_t derive_seed(uint64_t parent, std::string_view label, uint64_t index);

// Deterministic RNG wrapper. std::mt19937_64 gives a portable bit stream;
// the distributions here are hand-rolled because the standard library's
// distribution algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix64(seed ^ 0x9e3779b97f4a7c15ull)) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n);

  // Standard normal via Box-Muller (cached second deviate).
  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential() ;

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace refprime
