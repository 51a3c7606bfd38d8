#ifndef NTC_QUANTIZERS_HPP
#define NTC_QUANTIZERS_HPP

#include <cmath>
#include <cstdint>
#include <string>

#include "ntc/rng.hpp"
#include "ntc/tensor.hpp"

namespace ntc {

// Nearest integer, exact halves to even. IEEE round-to-nearest-even is the
// process default rounding mode, which makes this bit-exact across platforms.
inline double round_ties_even(double x) { return std::nearbyint(x); }

// Temperature-controlled interpolation between identity (tau -> 0) and hard
// rounding (tau -> inf). Half-integers are fixed points for every tau.
inline double soft_round_scalar(double y, double tau) {
  if (tau < 1e-6) return y;
  double fl = std::floor(y);
  double rho = y - fl - 0.5;
  return fl + 0.5 + 0.5 * std::tanh(tau * rho) / std::tanh(tau / 2);
}

enum class QuantizerKind : uint8_t { kHard, kDithered, kNoise, kSoft, kStraightThrough };

struct QuantizerMode {
  QuantizerKind kind = QuantizerKind::kHard;
  Tensor offset;                  // hard: per-dimension offset in [-1/2, 1/2)
  double temperature = 1.0;       // soft
  std::string dither_stream = "dither";  // dithered/noise seed stream name
};

Tensor round_int(const Tensor& y);
// floor(y - o) rounded, then shifted back: output lies on Z^M + o.
Tensor dither_quantize(const Tensor& y, const Tensor& o);
Tensor add_uniform_noise(const Tensor& y, CounterRng& stream);
Tensor soft_round(const Tensor& y, double tau);

}  // namespace ntc

#endif
