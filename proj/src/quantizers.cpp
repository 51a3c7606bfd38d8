#include "ntc/quantizers.hpp"

namespace ntc {

Tensor round_int(const Tensor& y) {
  Tensor out(y.shape());
  for (int64_t i = 0; i < y.size(); ++i) out[i] = round_ties_even(y[i]);
  return out;
}

Tensor dither_quantize(const Tensor& y, const Tensor& o) {
  int64_t m = o.size();
  for (int64_t i = 0; i < m; ++i)
    if (!(o[i] >= -0.5 && o[i] < 0.5)) throw DomainError("offset outside [-1/2, 1/2)");
  if (y.size() % m != 0) throw DimensionError("offset length does not divide tensor size");
  Tensor out(y.shape());
  for (int64_t i = 0; i < y.size(); ++i) {
    double oi = o[i % m];
    out[i] = round_ties_even(y[i] - oi) + oi;
  }
  return out;
}

Tensor add_uniform_noise(const Tensor& y, CounterRng& stream) {
  Tensor out(y.shape());
  for (int64_t i = 0; i < y.size(); ++i) out[i] = y[i] + stream.next_offset();
  return out;
}

Tensor soft_round(const Tensor& y, double tau) {
  if (!(tau > 0)) throw DomainError("soft_round temperature must be positive");
  Tensor out(y.shape());
  for (int64_t i = 0; i < y.size(); ++i) out[i] = soft_round_scalar(y[i], tau);
  return out;
}

}  // namespace ntc
