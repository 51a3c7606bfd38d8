#ifndef NTC_ENTROPY_MODEL_HPP
#define NTC_ENTROPY_MODEL_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "ntc/rng.hpp"
#include "ntc/tape.hpp"
#include "ntc/tensor.hpp"

namespace ntc {

// Factorized continuous density over noisy latents: per dimension a mixture
// of logistics. Logistic CDFs give the bin integrals in closed form, which is
// what the noisy rate term needs.
struct LogisticMixtureDensity {
  struct Dim {
    Tensor logits;      // [C]
    Tensor locs;        // [C]
    Tensor log_scales;  // [C]; scale = 1e-4 + exp(entry)
  };
  std::vector<Dim> dims;

  int64_t dim_count() const { return static_cast<int64_t>(dims.size()); }
  void validate() const;

  // Locations spread uniformly over [-span, span], uniform weights.
  static LogisticMixtureDensity make(int64_t m, int64_t components, double span,
                                     double init_log_scale);
};

constexpr double kDensityScaleFloor = 1e-4;
constexpr double kDensityMassFloor = 1e-12;

// Mixture CDF / pdf of one dimension at v.
double mixture_cdf(const LogisticMixtureDensity::Dim& d, double v);
double mixture_pdf(const LogisticMixtureDensity::Dim& d, double v);
// P(v - 1/2 <= Y < v + 1/2), floored at kDensityMassFloor.
double bin_mass(const LogisticMixtureDensity::Dim& d, double v);

// log2 of the noisy density at a latent vector (sum over dimensions).
double noisy_log2_density(const LogisticMixtureDensity& model, const double* v);
inline double noisy_log2_density(const LogisticMixtureDensity& model, const Tensor& v) {
  return noisy_log2_density(model, v.data());
}

// Per-dimension discrete PMF tables P(k; o) = p~(k + o), support widened
// until bin mass < 1e-9 at both ends, residual tails folded into the extreme
// symbols so the table sums to one.
struct PmfTable {
  int64_t kmin = 0;
  std::vector<double> p;
  int64_t kmax() const { return kmin + static_cast<int64_t>(p.size()) - 1; }
  // Coding probability with out-of-support symbols mapped to the extremes.
  double prob_clamped(int64_t k) const {
    if (k < kmin) return p.front();
    if (k > kmax()) return p.back();
    return p[static_cast<size_t>(k - kmin)];
  }
  int64_t clamp_symbol(int64_t k) const {
    if (k < kmin) return kmin;
    if (k > kmax()) return kmax();
    return k;
  }
};

std::vector<PmfTable> discrete_pmf(const LogisticMixtureDensity& model, const Tensor& offset,
                                   int64_t support_cap = int64_t{1} << 15);

// Offset aligning an integer with the per-dimension density mode (median
// fallback when the numeric scan finds several modes); entries in [-1/2,1/2).
Tensor select_offset_mode(const LogisticMixtureDensity& model);

// ---- tape bindings ----

struct BoundDensity {
  std::vector<std::array<ValueId, 3>> dims;  // logits, locs, log_scales
};
BoundDensity bind_density(Tape& tape, const LogisticMixtureDensity& d, bool trainable);

// Mean over the batch of -log2 p~(v) in bits per vector; latents [B x M].
ValueId density_rate_bits(Tape& tape, const BoundDensity& bound, ValueId latents);

}  // namespace ntc

#endif
