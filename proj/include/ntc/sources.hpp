#ifndef NTC_SOURCES_HPP
#define NTC_SOURCES_HPP

#include <cstdint>

#include "ntc/rng.hpp"
#include "ntc/tensor.hpp"

namespace ntc {

enum class SourceKind : uint8_t { kLaplaceStandard, kBanana };

struct SourceSpec {
  SourceKind kind = SourceKind::kLaplaceStandard;
  int dimension = 1;
  double banana_noise = 0.25;  // sigma of the ridge noise, banana only

  static SourceSpec laplace() { return {SourceKind::kLaplaceStandard, 1, 0.0}; }
  static SourceSpec banana(double sigma = 0.25) { return {SourceKind::kBanana, 2, sigma}; }
  void validate() const;
};

// i.i.d. draws, [count x N]; identical (spec, count, seed) is bit-identical.
Tensor sample_source(const SourceSpec& spec, int64_t count, uint64_t seed);
// Same stream semantics with an explicit purpose label, so training, dither
// and evaluation never share draws.
Tensor sample_source(const SourceSpec& spec, int64_t count, const CounterRng& stream);

double log_density(const SourceSpec& spec, const double* x);
inline double log_density(const SourceSpec& spec, const Tensor& x) {
  return log_density(spec, x.data());
}

}  // namespace ntc

#endif
