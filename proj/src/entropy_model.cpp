#include "ntc/entropy_model.hpp"

#include <algorithm>
#include <cmath>

#include "ntc/quantizers.hpp"

namespace ntc {
namespace {

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

struct DimView {
  std::vector<double> w, loc, scale;
};

DimView view_of(const LogisticMixtureDensity::Dim& d) {
  int64_t c = d.logits.size();
  DimView v;
  v.w.resize(static_cast<size_t>(c));
  v.loc.resize(static_cast<size_t>(c));
  v.scale.resize(static_cast<size_t>(c));
  double lmax = d.logits[0];
  for (int64_t i = 1; i < c; ++i) lmax = std::max(lmax, d.logits[i]);
  double sum = 0;
  for (int64_t i = 0; i < c; ++i) {
    v.w[static_cast<size_t>(i)] = std::exp(d.logits[i] - lmax);
    sum += v.w[static_cast<size_t>(i)];
    v.loc[static_cast<size_t>(i)] = d.locs[i];
    v.scale[static_cast<size_t>(i)] = kDensityScaleFloor + std::exp(d.log_scales[i]);
  }
  for (auto& x : v.w) x /= sum;
  return v;
}

}  // namespace

void LogisticMixtureDensity::validate() const {
  if (dims.empty()) throw DimensionError("density needs at least one dimension");
  for (const Dim& d : dims) {
    if (d.logits.ndim() != 1 || !d.logits.same_shape(d.locs) || !d.logits.same_shape(d.log_scales))
      throw DimensionError("mixture parameter vectors must share a [C] shape");
    if (d.logits.size() < 1) throw DimensionError("mixture needs at least one component");
  }
}

LogisticMixtureDensity LogisticMixtureDensity::make(int64_t m, int64_t components, double span,
                                                    double init_log_scale) {
  LogisticMixtureDensity d;
  for (int64_t i = 0; i < m; ++i) {
    Dim dim;
    dim.logits = Tensor({components});
    dim.locs = Tensor({components});
    dim.log_scales = Tensor({components});
    for (int64_t c = 0; c < components; ++c) {
      dim.locs[c] = components == 1 ? 0.0 : -span + 2 * span * c / (components - 1);
      dim.log_scales[c] = init_log_scale;
    }
    d.dims.push_back(std::move(dim));
  }
  d.validate();
  return d;
}

double mixture_cdf(const LogisticMixtureDensity::Dim& d, double v) {
  DimView view = view_of(d);
  double acc = 0;
  for (size_t c = 0; c < view.w.size(); ++c)
    acc += view.w[c] * sigmoid_scalar((v - view.loc[c]) / view.scale[c]);
  return acc;
}

double mixture_pdf(const LogisticMixtureDensity::Dim& d, double v) {
  DimView view = view_of(d);
  double acc = 0;
  for (size_t c = 0; c < view.w.size(); ++c) {
    double s = sigmoid_scalar((v - view.loc[c]) / view.scale[c]);
    acc += view.w[c] * s * (1 - s) / view.scale[c];
  }
  return acc;
}

double bin_mass(const LogisticMixtureDensity::Dim& d, double v) {
  double mass = mixture_cdf(d, v + 0.5) - mixture_cdf(d, v - 0.5);
  return std::max(mass, kDensityMassFloor);
}

double noisy_log2_density(const LogisticMixtureDensity& model, const double* v) {
  double acc = 0;
  for (size_t i = 0; i < model.dims.size(); ++i) acc += std::log2(bin_mass(model.dims[i], v[i]));
  return acc;
}

std::vector<PmfTable> discrete_pmf(const LogisticMixtureDensity& model, const Tensor& offset,
                                   int64_t support_cap) {
  model.validate();
  if (offset.size() != model.dim_count()) throw DimensionError("offset length != density dims");
  std::vector<PmfTable> tables;
  for (int64_t i = 0; i < model.dim_count(); ++i) {
    const auto& dim = model.dims[static_cast<size_t>(i)];
    double o = offset[i];
    // Start near the bulk of the mixture and widen until the interior bins
    // fall below 1e-9 on both sides.
    DimView view = view_of(dim);
    double lo = view.loc[0], hi = view.loc[0];
    for (size_t c = 0; c < view.loc.size(); ++c) {
      lo = std::min(lo, view.loc[c]);
      hi = std::max(hi, view.loc[c]);
    }
    int64_t kmin = static_cast<int64_t>(std::floor(lo - o));
    int64_t kmax = static_cast<int64_t>(std::ceil(hi - o));
    auto mass_at = [&](int64_t k) { return bin_mass(dim, static_cast<double>(k) + o); };
    while (mass_at(kmin) > 1e-9) {
      --kmin;
      if (-kmin > support_cap) throw DomainError("pmf support exceeds the hard cap");
    }
    while (mass_at(kmax) > 1e-9) {
      ++kmax;
      if (kmax > support_cap) throw DomainError("pmf support exceeds the hard cap");
    }
    PmfTable t;
    t.kmin = kmin;
    int64_t n = kmax - kmin + 1;
    t.p.resize(static_cast<size_t>(n));
    // Consecutive CDF evaluations, then tail folding at both extremes.
    std::vector<double> cdf(static_cast<size_t>(n + 1));
    for (int64_t k = 0; k <= n; ++k)
      cdf[static_cast<size_t>(k)] = mixture_cdf(dim, static_cast<double>(kmin + k) + o - 0.5);
    for (int64_t k = 0; k < n; ++k)
      t.p[static_cast<size_t>(k)] =
          std::max(cdf[static_cast<size_t>(k + 1)] - cdf[static_cast<size_t>(k)], kDensityMassFloor);
    t.p.front() += cdf.front();              // mass below the support
    t.p.back() += 1.0 - cdf.back();          // mass above the support
    // Exact unit sum: absorb the float residue into the largest entry.
    double sum = 0;
    for (double p : t.p) sum += p;
    size_t argmax = 0;
    for (size_t k = 1; k < t.p.size(); ++k)
      if (t.p[k] > t.p[argmax]) argmax = k;
    t.p[argmax] -= sum - 1.0;
    tables.push_back(std::move(t));
  }
  return tables;
}

Tensor select_offset_mode(const LogisticMixtureDensity& model) {
  model.validate();
  Tensor o({model.dim_count()});
  for (int64_t i = 0; i < model.dim_count(); ++i) {
    const auto& dim = model.dims[static_cast<size_t>(i)];
    DimView view = view_of(dim);
    double lo = view.loc[0], hi = view.loc[0], smax = view.scale[0];
    for (size_t c = 0; c < view.loc.size(); ++c) {
      lo = std::min(lo, view.loc[c]);
      hi = std::max(hi, view.loc[c]);
      smax = std::max(smax, view.scale[c]);
    }
    lo -= 10 * smax;
    hi += 10 * smax;
    const int grid = 4096;
    double h = (hi - lo) / grid;
    std::vector<double> pdf(grid + 1);
    for (int g = 0; g <= grid; ++g) pdf[static_cast<size_t>(g)] = mixture_pdf(dim, lo + g * h);
    double peak = *std::max_element(pdf.begin(), pdf.end());
    int modes = 0, argmax = 0;
    for (int g = 1; g < grid; ++g) {
      if (pdf[static_cast<size_t>(g)] > pdf[static_cast<size_t>(g - 1)] + 1e-9 * peak &&
          pdf[static_cast<size_t>(g)] > pdf[static_cast<size_t>(g + 1)] + 1e-9 * peak)
        ++modes;
      if (pdf[static_cast<size_t>(g)] > pdf[static_cast<size_t>(argmax)]) argmax = g;
    }
    double anchor;
    if (modes > 1) {
      // Multimodal: fall back to the median (bisection on the CDF).
      double a = lo, b = hi;
      for (int it = 0; it < 200; ++it) {
        double m = 0.5 * (a + b);
        (mixture_cdf(dim, m) < 0.5 ? a : b) = m;
      }
      anchor = 0.5 * (a + b);
    } else {
      // Golden-section refinement of the scanned argmax.
      double a = lo + std::max(argmax - 1, 0) * h;
      double b = lo + std::min(argmax + 1, grid) * h;
      const double gr = 0.6180339887498949;
      double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
      double f1 = mixture_pdf(dim, x1), f2 = mixture_pdf(dim, x2);
      for (int it = 0; it < 90; ++it) {
        if (f1 < f2) {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + gr * (b - a);
          f2 = mixture_pdf(dim, x2);
        } else {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - gr * (b - a);
          f1 = mixture_pdf(dim, x1);
        }
      }
      anchor = 0.5 * (a + b);
    }
    double frac = anchor - round_ties_even(anchor);
    if (frac >= 0.5) frac -= 1.0;
    if (frac < -0.5) frac += 1.0;
    o[i] = frac;
  }
  return o;
}

BoundDensity bind_density(Tape& tape, const LogisticMixtureDensity& d, bool trainable) {
  BoundDensity b;
  for (const auto& dim : d.dims) {
    std::array<ValueId, 3> ids;
    ids[0] = trainable ? tape.leaf(dim.logits) : tape.constant(dim.logits);
    ids[1] = trainable ? tape.leaf(dim.locs) : tape.constant(dim.locs);
    ids[2] = trainable ? tape.leaf(dim.log_scales) : tape.constant(dim.log_scales);
    b.dims.push_back(ids);
  }
  return b;
}

ValueId density_rate_bits(Tape& tape, const BoundDensity& bound, ValueId latents) {
  const Tensor& v = tape.value(latents);
  if (v.ndim() != 2 || v.cols() != static_cast<int64_t>(bound.dims.size()))
    throw DimensionError("latent batch must be [B x M]");
  int64_t batch = v.rows();
  ValueId total;
  for (size_t i = 0; i < bound.dims.size(); ++i) {
    ValueId col = tape.slice_col(latents, static_cast<int64_t>(i));
    ValueId mass = tape.logistic_mix_bin(col, bound.dims[i][0], bound.dims[i][1], bound.dims[i][2]);
    ValueId bits = tape.scale(tape.sum_all(tape.log(mass)), -kLog2E / static_cast<double>(batch));
    total = total.valid() ? tape.add(total, bits) : bits;
  }
  return total;
}

}  // namespace ntc
