#include "ntc/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "ntc/common.hpp"
#include "ntc/rng.hpp"

namespace ntc {
namespace {

// Exponential moments over [0, d]: integrals of {1, t, t^2} e^-t dt.
struct ExpMoments {
  double e0, e1, e2;
};
ExpMoments exp_moments(double d) {
  double ed = std::exp(-d);
  return {1.0 - ed, 1.0 - (d + 1.0) * ed, 2.0 - (d * d + 2.0 * d + 2.0) * ed};
}

double xlog2x(double p) { return p > 0 ? p * std::log2(p) : 0.0; }

}  // namespace

// Closed-form Lagrangian of the (delta, c) family member. Outer-bin sums use
// the geometric self-similarity of the exponential tail, so no truncation
// enters here.
double sullivan_lagrangian(double lambda, double delta, double c, double* rate_out,
                           double* distortion_out) {
  if (!(delta > 0) || !(c > 0)) throw DomainError("family parameters must be positive");
  double r = std::exp(-delta);
  double q = 0.5 * std::exp(-c) * (1.0 - r);  // probability of the first outer bin (one side)
  double p0 = 1.0 - std::exp(-c);

  double rate = -xlog2x(p0);
  if (q > 0) {
    double s0 = q / (1.0 - r);                      // sum of outer-bin probabilities, one side
    double s1 = q * r / ((1.0 - r) * (1.0 - r));    // sum of (k-1) p_k
    rate -= 2.0 * (std::log2(q) * s0 + std::log2(r) * s1);
  }

  ExpMoments mc = exp_moments(c);
  double d_center = mc.e2;  // both sides of the center bin
  ExpMoments md = exp_moments(delta);
  double g = md.e2 - md.e1 * md.e1 / md.e0;  // in-bin moment about the centroid
  double d_outer = std::exp(-c) * g / (1.0 - r);
  double distortion = d_center + d_outer;

  if (rate_out) *rate_out = rate;
  if (distortion_out) *distortion_out = distortion;
  return rate + lambda * distortion;
}

namespace {

double golden_min(const std::function<double(double)>& f, double a, double b, int iters) {
  const double gr = 0.6180339887498949;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

SullivanResult sullivan_ecsq(double lambda) {
  if (!(lambda > 0)) throw DomainError("lambda must be positive");

  auto L = [&](double delta, double c) { return sullivan_lagrangian(lambda, delta, c, nullptr, nullptr); };

  // Coarse log-spaced scan to land in the global basin, then alternating
  // golden-section refinement until the Lagrangian stops moving.
  const int kScan = 48;
  const double dlo = 1e-3, dhi = 40.0, clo = 1e-4, chi = 40.0;
  double best_d = 1.0, best_c = 0.5, best = 1e300;
  for (int i = 0; i < kScan; ++i) {
    double d = dlo * std::pow(dhi / dlo, static_cast<double>(i) / (kScan - 1));
    for (int j = 0; j < kScan; ++j) {
      double c = clo * std::pow(chi / clo, static_cast<double>(j) / (kScan - 1));
      double v = L(d, c);
      if (v < best) {
        best = v;
        best_d = d;
        best_c = c;
      }
    }
  }
  double prev = best;
  for (int round = 0; round < 60; ++round) {
    best_d = golden_min([&](double d) { return L(d, best_c); }, std::max(dlo, best_d / 4),
                        std::min(dhi, best_d * 4), 100);
    best_c = golden_min([&](double c) { return L(best_d, c); }, std::max(clo, best_c / 4),
                        std::min(chi, best_c * 4), 100);
    double now = L(best_d, best_c);
    if (prev - now < 1e-10) break;
    prev = now;
  }

  SullivanResult out;
  out.outer_width = best_d;
  out.center_halfwidth = best_c;
  double rate = 0, dist = 0;
  sullivan_lagrangian(lambda, best_d, best_c, &rate, &dist);
  out.point.rate = rate;
  out.point.distortion = dist;
  out.point.lambda = lambda;
  out.point.label = "sullivan";

  // Explicit description: enumerate side bins until the tail beyond falls
  // under 1e-12, folding the remainder into the outermost cells.
  double delta = best_d, c = best_c;
  int64_t nside = 1;
  while (0.5 * std::exp(-(c + nside * delta)) > 1e-12 && nside < 100000) ++nside;
  ExpMoments md = exp_moments(delta);
  double centroid_off = md.e1 / md.e0;

  QuantizerDescription& d = out.desc;
  d.dimension = 1;
  int64_t nsym = 2 * nside + 1;
  d.codevectors.resize(static_cast<size_t>(nsym));
  d.pmf.resize(static_cast<size_t>(nsym));
  d.boundaries.resize(static_cast<size_t>(nsym - 1));
  d.cell_symbol.resize(static_cast<size_t>(nsym));
  // Symbols ordered left to right; center symbol index nside.
  for (int64_t k = 0; k < nsym; ++k) d.cell_symbol[static_cast<size_t>(k)] = static_cast<int32_t>(k);
  d.codevectors[static_cast<size_t>(nside)] = 0.0;
  d.pmf[static_cast<size_t>(nside)] = 1.0 - std::exp(-c);
  for (int64_t k = 1; k <= nside; ++k) {
    double a = c + (k - 1) * delta;
    double prob, cv;
    if (k < nside) {
      prob = 0.5 * std::exp(-a) * (1.0 - std::exp(-delta));
      cv = a + centroid_off;
    } else {  // folded tail cell [a, inf)
      prob = 0.5 * std::exp(-a);
      cv = a + 1.0;
    }
    d.pmf[static_cast<size_t>(nside + k)] = prob;
    d.pmf[static_cast<size_t>(nside - k)] = prob;
    d.codevectors[static_cast<size_t>(nside + k)] = cv;
    d.codevectors[static_cast<size_t>(nside - k)] = -cv;
    d.boundaries[static_cast<size_t>(nside + k - 1)] = a;
    d.boundaries[static_cast<size_t>(nside - k)] = -a;
  }
  // Absorb the float residue so the table sums to one exactly.
  double sum = 0;
  for (double p : d.pmf) sum += p;
  d.pmf[static_cast<size_t>(nside)] -= sum - 1.0;
  d.validate();
  return out;
}

void QuantizerDescription::validate() const {
  if (symbol_count() < 1) throw DimensionError("quantizer needs at least one symbol");
  if (codevectors.size() != pmf.size() * static_cast<size_t>(dimension))
    throw DimensionError("one codevector per symbol required");
  double sum = 0;
  for (double p : pmf) {
    if (p < 0) throw DomainError("negative probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw DomainError("pmf does not sum to 1");
  if (dimension == 1) {
    for (size_t i = 1; i < boundaries.size(); ++i)
      if (!(boundaries[i] > boundaries[i - 1]))
        throw DomainError("boundaries must be strictly increasing");
    if (cell_symbol.size() != boundaries.size() + 1)
      throw DimensionError("cell count must be boundary count + 1");
    for (int32_t s : cell_symbol)
      if (s < 0 || s >= symbol_count()) throw DimensionError("cell symbol out of range");
  } else if (dimension == 2) {
    if (grid_resolution < 2 || static_cast<int64_t>(grid_labels.size()) != grid_resolution * grid_resolution)
      throw DimensionError("label grid must be resolution^2");
    if (!(xhi > xlo) || !(yhi > ylo)) throw DomainError("empty grid box");
    for (int32_t s : grid_labels)
      if (s < 0 || s >= symbol_count()) throw DimensionError("grid label out of range");
  } else {
    throw DimensionError("only 1-D and 2-D quantizers are described");
  }
}

int32_t QuantizerDescription::locate_1d(double x) const {
  size_t cell = static_cast<size_t>(std::upper_bound(boundaries.begin(), boundaries.end(), x) -
                                    boundaries.begin());
  return cell_symbol[cell];
}

int32_t QuantizerDescription::locate_2d(double x, double y, bool* outside) const {
  double fx = (x - xlo) / (xhi - xlo) * static_cast<double>(grid_resolution);
  double fy = (y - ylo) / (yhi - ylo) * static_cast<double>(grid_resolution);
  int64_t ix = static_cast<int64_t>(std::floor(fx));
  int64_t iy = static_cast<int64_t>(std::floor(fy));
  bool out = ix < 0 || iy < 0 || ix >= grid_resolution || iy >= grid_resolution;
  if (outside) *outside = out;
  ix = std::clamp<int64_t>(ix, 0, grid_resolution - 1);
  iy = std::clamp<int64_t>(iy, 0, grid_resolution - 1);
  return grid_labels[static_cast<size_t>(ix * grid_resolution + iy)];
}

RdPoint evaluate_quantizer(const QuantizerDescription& desc, const SourceSpec& source, int64_t n,
                           uint64_t seed) {
  desc.validate();
  if (n < 100000) throw DomainError("evaluate_quantizer needs n >= 1e5");
  Tensor xs = sample_source(source, n, CounterRng(seed).fork("quantizer-eval"));
  int dim = desc.dimension;
  double sr = 0, sd = 0, srr = 0, sdd = 0, srd = 0;
  int64_t outside_count = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double* x = xs.data() + i * dim;
    int32_t sym;
    if (dim == 1) {
      sym = desc.locate_1d(x[0]);
    } else {
      bool out = false;
      sym = desc.locate_2d(x[0], x[1], &out);
      outside_count += out;
    }
    double ri = -std::log2(std::max(desc.pmf[static_cast<size_t>(sym)], 1e-300));
    double di = 0;
    for (int d = 0; d < dim; ++d) {
      double e = x[d] - desc.codevectors[static_cast<size_t>(sym) * dim + static_cast<size_t>(d)];
      di += e * e;
    }
    sr += ri;
    sd += di;
    srr += ri * ri;
    sdd += di * di;
    srd += ri * di;
  }
  double dn = static_cast<double>(n);
  RdPoint p;
  p.rate = sr / dn;
  p.distortion = sd / dn;
  p.n = dn;
  p.rate_var = srr / dn - p.rate * p.rate;
  p.dist_var = sdd / dn - p.distortion * p.distortion;
  p.rd_cov = srd / dn - p.rate * p.distortion;
  p.meta = static_cast<double>(outside_count) / dn;
  p.label = "mc-eval";
  return p;
}

// ---- Blahut-Arimoto ----

namespace {

// C = A * B with A [m x k], B [k x n], all row-major raw buffers.
void matmul_raw(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  std::fill(c, c + m * n, 0.0);
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      if (av == 0) continue;
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

}  // namespace

BaGrid ba_grid_for(const SourceSpec& spec, int points_per_axis) {
  spec.validate();
  BaGrid g;
  if (spec.kind == SourceKind::kLaplaceStandard) {
    g.x1 = linspace(-12.0, 12.0, points_per_axis);
    g.pmf.resize(g.x1.size());
    double sum = 0;
    for (size_t i = 0; i < g.x1.size(); ++i) {
      g.pmf[i] = std::exp(log_density(spec, &g.x1[i]));
      sum += g.pmf[i];
    }
    for (auto& p : g.pmf) p /= sum;
    g.truncated_mass = std::exp(-12.0);
  } else {
    // Extents sized to the banana's curved support so the truncated mass
    // stays below ~1e-9; the spec's symmetric box would clip the ridge.
    g.x1 = linspace(-6.0, 6.0, points_per_axis);
    g.x2 = linspace(-3.0, 20.0, points_per_axis);
    g.pmf.resize(g.x1.size() * g.x2.size());
    double sum = 0;
    for (size_t i = 0; i < g.x1.size(); ++i)
      for (size_t j = 0; j < g.x2.size(); ++j) {
        double x[2] = {g.x1[i], g.x2[j]};
        double p = std::exp(log_density(spec, x));
        g.pmf[i * g.x2.size() + j] = p;
        sum += p;
      }
    for (auto& p : g.pmf) p /= sum;
    g.truncated_mass = 2e-9;
  }
  return g;
}

BaGrid ba_grid_gaussian(double sigma, int points) {
  BaGrid g;
  g.x1 = linspace(-12.0, 12.0, points);
  g.pmf.resize(g.x1.size());
  double sum = 0;
  for (size_t i = 0; i < g.x1.size(); ++i) {
    double z = g.x1[i] / sigma;
    g.pmf[i] = std::exp(-0.5 * z * z);
    sum += g.pmf[i];
  }
  for (auto& p : g.pmf) p /= sum;
  g.truncated_mass = std::erfc(12.0 / (sigma * std::sqrt(2.0)));
  return g;
}

BaResult blahut_arimoto(const BaGrid& grid, double lambda, int max_iterations, double tol,
                        std::vector<double>* warm_start) {
  if (!(lambda > 0)) throw DomainError("lambda must be positive");
  double lam_nats = lambda * kLn2;
  bool two_d = !grid.x2.empty();
  int64_t n1 = static_cast<int64_t>(grid.x1.size());
  int64_t n2 = two_d ? static_cast<int64_t>(grid.x2.size()) : 1;
  int64_t total = n1 * n2;

  auto kernel = [&](const std::vector<double>& ax) {
    int64_t n = static_cast<int64_t>(ax.size());
    std::vector<double> k(static_cast<size_t>(n * n));
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double d = ax[static_cast<size_t>(i)] - ax[static_cast<size_t>(j)];
        k[static_cast<size_t>(i * n + j)] = std::exp(-lam_nats * d * d);
      }
    return k;
  };
  std::vector<double> k1 = kernel(grid.x1);
  std::vector<double> k2 = two_d ? kernel(grid.x2) : std::vector<double>();

  std::vector<double> r(static_cast<size_t>(total), 1.0 / static_cast<double>(total));
  if (warm_start && static_cast<int64_t>(warm_start->size()) == total) r = *warm_start;

  std::vector<double> z(static_cast<size_t>(total)), c(static_cast<size_t>(total)),
      tmp(static_cast<size_t>(total)), tmp2(static_cast<size_t>(total));

  auto apply_kernel = [&](const std::vector<double>& in, std::vector<double>& out) {
    if (!two_d) {
      matmul_raw(k1.data(), in.data(), out.data(), n1, n1, 1);
    } else {
      matmul_raw(k1.data(), in.data(), tmp2.data(), n1, n1, n2);
      matmul_raw(tmp2.data(), k2.data(), out.data(), n1, n2, n2);
    }
  };

  double gap = 0;
  int it = 0;
  for (; it < max_iterations; ++it) {
    apply_kernel(r, z);
    for (int64_t i = 0; i < total; ++i)
      tmp[static_cast<size_t>(i)] = grid.pmf[static_cast<size_t>(i)] / z[static_cast<size_t>(i)];
    apply_kernel(tmp, c);
    double cmax = 0;
    for (int64_t i = 0; i < total; ++i) cmax = std::max(cmax, c[static_cast<size_t>(i)]);
    gap = std::log(cmax);
    double sum = 0;
    for (int64_t i = 0; i < total; ++i) {
      r[static_cast<size_t>(i)] *= c[static_cast<size_t>(i)];
      sum += r[static_cast<size_t>(i)];
    }
    for (int64_t i = 0; i < total; ++i) r[static_cast<size_t>(i)] /= sum;
    if (gap < tol) {
      ++it;
      break;
    }
  }
  if (gap >= tol)
    throw NumericError("blahut_arimoto did not converge, gap " + std::to_string(gap) + " nats");
  if (warm_start) *warm_start = r;

  // Final rate and expected distortion from the implied conditional.
  apply_kernel(r, z);
  std::vector<double> num(static_cast<size_t>(total));
  if (!two_d) {
    std::vector<double> k1d(k1.size());
    for (int64_t i = 0; i < n1; ++i)
      for (int64_t j = 0; j < n1; ++j) {
        double d = grid.x1[static_cast<size_t>(i)] - grid.x1[static_cast<size_t>(j)];
        k1d[static_cast<size_t>(i * n1 + j)] = k1[static_cast<size_t>(i * n1 + j)] * d * d;
      }
    matmul_raw(k1d.data(), r.data(), num.data(), n1, n1, 1);
  } else {
    std::vector<double> k1d(k1.size()), k2d(k2.size());
    for (int64_t i = 0; i < n1; ++i)
      for (int64_t j = 0; j < n1; ++j) {
        double d = grid.x1[static_cast<size_t>(i)] - grid.x1[static_cast<size_t>(j)];
        k1d[static_cast<size_t>(i * n1 + j)] = k1[static_cast<size_t>(i * n1 + j)] * d * d;
      }
    for (int64_t i = 0; i < n2; ++i)
      for (int64_t j = 0; j < n2; ++j) {
        double d = grid.x2[static_cast<size_t>(i)] - grid.x2[static_cast<size_t>(j)];
        k2d[static_cast<size_t>(i * n2 + j)] = k2[static_cast<size_t>(i * n2 + j)] * d * d;
      }
    std::vector<double> part(static_cast<size_t>(total));
    matmul_raw(k1d.data(), r.data(), tmp2.data(), n1, n1, n2);
    matmul_raw(tmp2.data(), k2.data(), part.data(), n1, n2, n2);
    matmul_raw(k1.data(), r.data(), tmp2.data(), n1, n1, n2);
    matmul_raw(tmp2.data(), k2d.data(), num.data(), n1, n2, n2);
    for (int64_t i = 0; i < total; ++i) num[static_cast<size_t>(i)] += part[static_cast<size_t>(i)];
  }
  double distortion = 0, rate_nats = 0;
  for (int64_t i = 0; i < total; ++i) {
    double p = grid.pmf[static_cast<size_t>(i)];
    if (p <= 0) continue;
    distortion += p * num[static_cast<size_t>(i)] / z[static_cast<size_t>(i)];
    rate_nats -= p * std::log(z[static_cast<size_t>(i)]);
  }
  rate_nats -= lam_nats * distortion;

  BaResult out;
  out.iterations = it;
  out.gap = gap;
  out.point.rate = std::max(rate_nats / kLn2, 0.0);
  out.point.distortion = distortion;
  out.point.lambda = lambda;
  out.point.label = "ba";
  out.point.meta = grid.truncated_mass;
  return out;
}

}  // namespace ntc
