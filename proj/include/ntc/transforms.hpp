#ifndef NTC_TRANSFORMS_HPP
#define NTC_TRANSFORMS_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "ntc/rng.hpp"
#include "ntc/tape.hpp"
#include "ntc/tensor.hpp"

namespace ntc {

enum class Nonlinearity : uint8_t { kNone, kSoftplus, kGdn };

// GDN parameters are stored unconstrained and mapped through
// x -> (max(x, floor))^2, keeping beta >= 1e-6 and gamma >= 0.
constexpr double kGdnBetaRawFloor = 1e-3;

struct MlpLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  Nonlinearity nonlin = Nonlinearity::kNone;
  Tensor beta_raw;   // [out], gdn layers only
  Tensor gamma_raw;  // [out x out], gdn layers only
};

struct MlpTransform {
  std::vector<MlpLayer> layers;

  int64_t input_dim() const { return layers.front().weight.cols(); }
  int64_t output_dim() const { return layers.back().weight.rows(); }
  void validate() const;  // dims chain; final layer has no nonlinearity
};

// 4 fully connected layers, softplus (or gdn) on all but the last.
MlpTransform make_mlp(int64_t in, int64_t hidden, int64_t out, int n_layers,
                      Nonlinearity nonlin, CounterRng& init, double final_gain = 1.0);
// Single affine layer, identity init; the linear-transform-code baseline.
MlpTransform make_ltc(int64_t n);

// ---- first-order splines over log2(lambda) ----

// Piecewise-linear interpolation at coordinate t (already in log2-lambda
// space); out-of-range queries clamp to the end values.
double spline_eval(std::span<const double> knots, std::span<const double> values, double t);

enum class ConditioningVariant : uint8_t {
  kNone,
  kLatentScaling,
  kLatentAffine,
  kLayerScaling,
  kLayerAffine,
  kGdnParams,
};

enum class CondRole : uint8_t { kAnalysis, kSynthesis };

// Lambda-conditioning state: a shared knot grid plus one value row per
// conditioned scalar ("site"). Site rows are laid out per transform in layer
// order, scales before shifts, so both the plain and taped paths slice the
// same ranges.
struct ConditioningSpec {
  ConditioningVariant variant = ConditioningVariant::kNone;
  std::vector<double> knots;  // log2(lambda), strictly increasing, >= 2
  Tensor site_values;         // [site_count x knot_count]
  int64_t analysis_sites = 0; // rows belonging to g_a; the rest are g_s's

  void validate() const;
  int64_t site_count() const { return variant == ConditioningVariant::kNone ? 0 : site_values.rows(); }

  // Neutral construction (identity insertion at every lambda): scales 1,
  // shifts 0, gdn splines copying the transforms' stored raw parameters.
  static ConditioningSpec make(ConditioningVariant variant, const MlpTransform& ga,
                               const MlpTransform& gs, double log2_lambda_lo,
                               double log2_lambda_hi, int knot_count);
};

int64_t conditioning_site_count(ConditioningVariant variant, const MlpTransform& ga,
                                const MlpTransform& gs);

struct CondQuery {
  const ConditioningSpec* spec = nullptr;
  double lambda = 1.0;
  CondRole role = CondRole::kAnalysis;
};

// ---- forward passes ----

struct BoundTransform {
  std::vector<ValueId> weight, bias, beta_raw, gamma_raw;
};
BoundTransform bind_transform(Tape& tape, const MlpTransform& t, bool trainable);

struct BoundCond {
  ValueId site_values;  // [site_count x knot_count]
};
BoundCond bind_conditioning(Tape& tape, const ConditioningSpec& c, bool trainable);

// Taped forward pass; x is [batch x in]. When cond is conditioned, scale and
// shift insertions (or gdn parameter substitution) are applied per variant.
// clamped, when given, reports a lambda outside the spline knot range.
ValueId transform_forward(Tape& tape, const MlpTransform& arch, const BoundTransform& bound,
                          ValueId x, const ConditioningSpec* cond, const BoundCond* bound_cond,
                          double lambda, CondRole role, bool* clamped = nullptr);

// Convenience non-training forward (single implementation: a throwaway tape).
Tensor mlp_forward(const MlpTransform& t, const Tensor& x,
                   std::optional<CondQuery> cond = std::nullopt, bool* clamped = nullptr);

// ---- KLT ----

// Eigenbasis of the sample covariance: columns orthonormal, eigenvalues
// descending, each column's largest-magnitude entry positive.
Tensor klt_from_samples(const Tensor& samples);
// Eigenvalues that go with klt_from_samples' columns.
std::vector<double> klt_eigenvalues(const Tensor& samples);

}  // namespace ntc

#endif
