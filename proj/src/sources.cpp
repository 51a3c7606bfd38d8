#include "ntc/sources.hpp"

#include <cmath>

namespace ntc {
namespace {
constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log sqrt(2 pi)

double log_normal_pdf(double x, double sigma) {
  double z = x / sigma;
  return -0.5 * z * z - kLogSqrt2Pi - std::log(sigma);
}
}  // namespace

void SourceSpec::validate() const {
  if (kind == SourceKind::kLaplaceStandard && dimension != 1)
    throw DomainError("laplace source is one-dimensional");
  if (kind == SourceKind::kBanana) {
    if (dimension != 2) throw DomainError("banana source is two-dimensional");
    if (!(banana_noise > 0)) throw DomainError("banana noise scale must be positive");
  }
}

Tensor sample_source(const SourceSpec& spec, int64_t count, const CounterRng& stream) {
  spec.validate();
  if (count < 1) throw DomainError("sample count must be >= 1");
  CounterRng rng = stream;
  Tensor out({count, spec.dimension});
  if (spec.kind == SourceKind::kLaplaceStandard) {
    for (int64_t i = 0; i < count; ++i) out[i] = rng.next_laplace();
  } else {
    for (int64_t i = 0; i < count; ++i) {
      double u = rng.next_normal();
      double n = rng.next_normal() * spec.banana_noise;
      out.at(i, 0) = u;
      out.at(i, 1) = 0.5 * (u * u - 1.0) + n;
    }
  }
  return out;
}

Tensor sample_source(const SourceSpec& spec, int64_t count, uint64_t seed) {
  return sample_source(spec, count, CounterRng(seed).fork("data"));
}

double log_density(const SourceSpec& spec, const double* x) {
  if (spec.kind == SourceKind::kLaplaceStandard) {
    return -std::fabs(x[0]) - kLn2;
  }
  double resid = x[1] - 0.5 * (x[0] * x[0] - 1.0);
  return log_normal_pdf(x[0], 1.0) + log_normal_pdf(resid, spec.banana_noise);
}

}  // namespace ntc
