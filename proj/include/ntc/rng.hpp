#ifndef NTC_RNG_HPP
#define NTC_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>

#include "ntc/common.hpp"

namespace ntc {

// Counter-based generator: output i of a stream is a pure function of
// (key, i), so streams can be forked by name without perturbing each other
// and any draw can be reproduced from (seed, stream path, index).
class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : key_(mix(0x9e3779b97f4a7c15ull, seed)) {}

  // Derive an independent stream; the parent is left untouched.
  CounterRng fork(std::string_view purpose) const {
    CounterRng child(*this);
    child.key_ = mix(key_, fnv1a64(std::string(purpose)));
    child.counter_ = 0;
    return child;
  }
  CounterRng fork(uint64_t index) const {
    CounterRng child(*this);
    child.key_ = mix(key_, 0xd1342543de82ef95ull + index);
    child.counter_ = 0;
    return child;
  }

  uint64_t next_u64() { return mix(key_, counter_++); }

  // Uniform in [0,1) with 53-bit resolution.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [-1/2, 1/2).
  double next_offset() { return next_uniform() - 0.5; }

  // Standard normal via Box-Muller; consumes two draws per call pair.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_uniform();
    double u2 = next_uniform();
    // Guard log(0); the event has probability 2^-53.
    double r = std::sqrt(-2.0 * std::log(u1 > 0 ? u1 : 0x1.0p-53));
    double a = 6.283185307179586477 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Standard Laplace (location 0, scale 1) by inverse CDF.
  double next_laplace() {
    double v = next_uniform() - 0.5;
    double arg = 1.0 - 2.0 * std::fabs(v);
    if (arg < 0x1.0p-53) arg = 0x1.0p-53;
    double mag = -std::log(arg);
    return v < 0 ? -mag : mag;
  }

 private:
  // SplitMix64 finalizer over a keyed counter.
  static uint64_t mix(uint64_t key, uint64_t x) {
    uint64_t z = x + 0x9e3779b97f4a7c15ull + key;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace ntc

#endif
