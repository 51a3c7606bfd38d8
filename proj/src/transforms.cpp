#include "ntc/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ntc {

void MlpTransform::validate() const {
  if (layers.empty()) throw DimensionError("transform has no layers");
  for (size_t l = 0; l + 1 < layers.size(); ++l)
    if (layers[l].weight.rows() != layers[l + 1].weight.cols())
      throw DimensionError("layer dimensions do not chain");
  if (layers.back().nonlin != Nonlinearity::kNone)
    throw DimensionError("final layer must be linear");
  for (const MlpLayer& l : layers) {
    if (l.bias.size() != l.weight.rows()) throw DimensionError("bias length mismatch");
    if (l.nonlin == Nonlinearity::kGdn &&
        (l.beta_raw.size() != l.weight.rows() || l.gamma_raw.size() != l.weight.rows() * l.weight.rows()))
      throw DimensionError("gdn parameter shapes mismatch");
  }
}

MlpTransform make_mlp(int64_t in, int64_t hidden, int64_t out, int n_layers, Nonlinearity nonlin,
                      CounterRng& init, double final_gain) {
  if (n_layers < 1) throw DomainError("need at least one layer");
  MlpTransform t;
  for (int l = 0; l < n_layers; ++l) {
    int64_t a = (l == 0) ? in : hidden;
    int64_t b = (l == n_layers - 1) ? out : hidden;
    MlpLayer layer;
    layer.weight = Tensor({b, a});
    double lim = std::sqrt(3.0 / static_cast<double>(a));
    if (l == n_layers - 1) lim *= final_gain;
    for (int64_t i = 0; i < layer.weight.size(); ++i)
      layer.weight[i] = lim * (2 * init.next_uniform() - 1);
    layer.bias = Tensor({b});
    layer.nonlin = (l == n_layers - 1) ? Nonlinearity::kNone : nonlin;
    if (layer.nonlin == Nonlinearity::kGdn) {
      layer.beta_raw = Tensor({b});
      for (int64_t i = 0; i < b; ++i) layer.beta_raw[i] = 1.0;
      layer.gamma_raw = Tensor({b, b});
      for (int64_t i = 0; i < b; ++i) layer.gamma_raw.at(i, i) = std::sqrt(0.1);
    }
    t.layers.push_back(std::move(layer));
  }
  t.validate();
  return t;
}

MlpTransform make_ltc(int64_t n) {
  MlpTransform t;
  MlpLayer layer;
  layer.weight = Tensor({n, n});
  for (int64_t i = 0; i < n; ++i) layer.weight.at(i, i) = 1.0;
  layer.bias = Tensor({n});
  layer.nonlin = Nonlinearity::kNone;
  t.layers.push_back(std::move(layer));
  t.validate();
  return t;
}

double spline_eval(std::span<const double> knots, std::span<const double> values, double t) {
  if (knots.size() < 2 || knots.size() != values.size())
    throw DimensionError("spline needs matching knots/values, at least two");
  if (t <= knots.front()) return values.front();
  if (t >= knots.back()) return values.back();
  size_t hi = static_cast<size_t>(std::upper_bound(knots.begin(), knots.end(), t) - knots.begin());
  size_t lo = hi - 1;
  double w = (t - knots[lo]) / (knots[hi] - knots[lo]);
  return (1.0 - w) * values[lo] + w * values[hi];
}

namespace {

// Canonical site layout per transform: latent variants have one block per
// transform; layer variants one block per hidden layer (scales then shifts);
// gdn_params one block per gdn layer (beta_raw then gamma_raw).
int64_t sites_for(ConditioningVariant v, const MlpTransform& t) {
  switch (v) {
    case ConditioningVariant::kNone: return 0;
    case ConditioningVariant::kLatentScaling: return 1;
    case ConditioningVariant::kLatentAffine:
      return 2 * t.output_dim();
    case ConditioningVariant::kLayerScaling:
    case ConditioningVariant::kLayerAffine: {
      int64_t n = 0;
      for (size_t l = 0; l + 1 < t.layers.size(); ++l) n += t.layers[l].weight.rows();
      return v == ConditioningVariant::kLayerAffine ? 2 * n : n;
    }
    case ConditioningVariant::kGdnParams: {
      int64_t n = 0;
      for (const MlpLayer& l : t.layers)
        if (l.nonlin == Nonlinearity::kGdn) n += l.weight.rows() * (1 + l.weight.rows());
      return n;
    }
  }
  return 0;
}

}  // namespace

int64_t conditioning_site_count(ConditioningVariant v, const MlpTransform& ga,
                                const MlpTransform& gs) {
  // Latent variants condition g_a's output and g_s's input, which share M.
  if (v == ConditioningVariant::kLatentAffine && ga.output_dim() != gs.input_dim())
    throw DimensionError("latent conditioning needs matching latent dims");
  return sites_for(v, ga) + sites_for(v, gs);
}

void ConditioningSpec::validate() const {
  if (variant == ConditioningVariant::kNone) return;
  if (knots.size() < 2) throw DomainError("conditioning needs at least two knots");
  for (size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i] > knots[i - 1])) throw DomainError("knots must be strictly increasing");
  if (site_values.ndim() != 2 || site_values.cols() != static_cast<int64_t>(knots.size()))
    throw DimensionError("site value table must be [sites x knots]");
}

ConditioningSpec ConditioningSpec::make(ConditioningVariant variant, const MlpTransform& ga,
                                        const MlpTransform& gs, double log2_lambda_lo,
                                        double log2_lambda_hi, int knot_count) {
  ConditioningSpec c;
  c.variant = variant;
  if (variant == ConditioningVariant::kNone) return c;
  if (knot_count < 2) throw DomainError("knot count must be >= 2");
  if (!(log2_lambda_hi > log2_lambda_lo)) throw DomainError("empty lambda range");
  c.knots.resize(static_cast<size_t>(knot_count));
  for (int k = 0; k < knot_count; ++k)
    c.knots[static_cast<size_t>(k)] =
        log2_lambda_lo + (log2_lambda_hi - log2_lambda_lo) * k / (knot_count - 1);

  int64_t total = conditioning_site_count(variant, ga, gs);
  c.analysis_sites = sites_for(variant, ga);
  c.site_values = Tensor({total, knot_count});

  // Neutral defaults: identity insertion at every lambda.
  auto fill_block = [&](int64_t row0, int64_t rows, double v) {
    for (int64_t r = 0; r < rows; ++r)
      for (int k = 0; k < knot_count; ++k) c.site_values.at(row0 + r, k) = v;
  };
  auto fill_from = [&](int64_t row0, const Tensor& src) {
    for (int64_t r = 0; r < src.size(); ++r)
      for (int k = 0; k < knot_count; ++k) c.site_values.at(row0 + r, k) = src[r];
  };
  int64_t row = 0;
  for (const MlpTransform* t : {&ga, &gs}) {
    switch (variant) {
      case ConditioningVariant::kLatentScaling:
        fill_block(row, 1, 1.0);
        row += 1;
        break;
      case ConditioningVariant::kLatentAffine: {
        int64_t m = t->output_dim();
        fill_block(row, m, 1.0);
        fill_block(row + m, m, 0.0);
        row += 2 * m;
        break;
      }
      case ConditioningVariant::kLayerScaling:
      case ConditioningVariant::kLayerAffine:
        for (size_t l = 0; l + 1 < t->layers.size(); ++l) {
          int64_t h = t->layers[l].weight.rows();
          fill_block(row, h, 1.0);
          row += h;
          if (variant == ConditioningVariant::kLayerAffine) {
            fill_block(row, h, 0.0);
            row += h;
          }
        }
        break;
      case ConditioningVariant::kGdnParams:
        for (const MlpLayer& l : t->layers)
          if (l.nonlin == Nonlinearity::kGdn) {
            fill_from(row, l.beta_raw);
            row += l.beta_raw.size();
            fill_from(row, l.gamma_raw);
            row += l.gamma_raw.size();
          }
        break;
      default: break;
    }
  }
  c.validate();
  return c;
}

BoundTransform bind_transform(Tape& tape, const MlpTransform& t, bool trainable) {
  BoundTransform b;
  for (const MlpLayer& l : t.layers) {
    b.weight.push_back(trainable ? tape.leaf(l.weight) : tape.constant(l.weight));
    b.bias.push_back(trainable ? tape.leaf(l.bias) : tape.constant(l.bias));
    if (l.nonlin == Nonlinearity::kGdn) {
      b.beta_raw.push_back(trainable ? tape.leaf(l.beta_raw) : tape.constant(l.beta_raw));
      b.gamma_raw.push_back(trainable ? tape.leaf(l.gamma_raw) : tape.constant(l.gamma_raw));
    } else {
      b.beta_raw.push_back(ValueId{});
      b.gamma_raw.push_back(ValueId{});
    }
  }
  return b;
}

BoundCond bind_conditioning(Tape& tape, const ConditioningSpec& c, bool trainable) {
  BoundCond b;
  b.site_values = trainable ? tape.leaf(c.site_values) : tape.constant(c.site_values);
  return b;
}

namespace {

// Per-lambda site vector: linear interpolation between the two bracketing
// knot columns, differentiable in the site value table.
ValueId cond_sites_at(Tape& tape, const ConditioningSpec& c, ValueId site_values, double lambda,
                      bool* clamped) {
  if (!(lambda > 0)) throw DomainError("conditioning lambda must be positive");
  double t = std::log2(lambda);
  if (t < c.knots.front() || t > c.knots.back()) {
    if (clamped) *clamped = true;
    t = std::clamp(t, c.knots.front(), c.knots.back());
  }
  size_t hi = static_cast<size_t>(std::upper_bound(c.knots.begin(), c.knots.end(), t) -
                                  c.knots.begin());
  if (hi >= c.knots.size()) hi = c.knots.size() - 1;
  if (hi == 0) hi = 1;
  size_t lo = hi - 1;
  double w = (t - c.knots[lo]) / (c.knots[hi] - c.knots[lo]);
  ValueId vlo = tape.slice_col(site_values, static_cast<int64_t>(lo));
  ValueId vhi = tape.slice_col(site_values, static_cast<int64_t>(hi));
  return tape.add(tape.scale(vlo, 1.0 - w), tape.scale(vhi, w));
}

}  // namespace

ValueId transform_forward(Tape& tape, const MlpTransform& arch, const BoundTransform& bound,
                          ValueId x, const ConditioningSpec* cond, const BoundCond* bound_cond,
                          double lambda, CondRole role, bool* clamped) {
  bool conditioned = cond && cond->variant != ConditioningVariant::kNone;
  ValueId sites;
  int64_t cursor = 0;
  if (conditioned) {
    sites = cond_sites_at(tape, *cond, bound_cond->site_values, lambda, clamped);
    if (role == CondRole::kSynthesis) cursor = cond->analysis_sites;
  }
  auto take = [&](int64_t n) {
    ValueId v = tape.slice_range(sites, cursor, n);
    cursor += n;
    return v;
  };

  ValueId h = x;
  if (conditioned && role == CondRole::kSynthesis) {
    if (cond->variant == ConditioningVariant::kLatentScaling) {
      h = tape.mul(h, take(1));
    } else if (cond->variant == ConditioningVariant::kLatentAffine) {
      int64_t m = arch.input_dim();
      ValueId f = take(m);
      ValueId g = take(m);
      h = tape.add(tape.mul(h, f), g);
    }
  }

  for (size_t l = 0; l < arch.layers.size(); ++l) {
    const MlpLayer& layer = arch.layers[l];
    h = tape.linear(h, bound.weight[l], bound.bias[l]);
    switch (layer.nonlin) {
      case Nonlinearity::kNone: break;
      case Nonlinearity::kSoftplus: h = tape.softplus(h); break;
      case Nonlinearity::kGdn: {
        ValueId braw = bound.beta_raw[l];
        ValueId graw = bound.gamma_raw[l];
        if (conditioned && cond->variant == ConditioningVariant::kGdnParams) {
          int64_t u = layer.weight.rows();
          braw = take(u);
          graw = tape.reshape(take(u * u), {u, u});
        }
        ValueId beta = tape.square(tape.clamp_min(braw, kGdnBetaRawFloor));
        ValueId gamma = tape.square(tape.clamp_min(graw, 0.0));
        h = tape.gdn(h, beta, gamma);
        break;
      }
    }
    bool hidden = l + 1 < arch.layers.size();
    if (conditioned && hidden &&
        (cond->variant == ConditioningVariant::kLayerScaling ||
         cond->variant == ConditioningVariant::kLayerAffine)) {
      int64_t hdim = layer.weight.rows();
      h = tape.mul(h, take(hdim));
      if (cond->variant == ConditioningVariant::kLayerAffine) h = tape.add(h, take(hdim));
    }
  }

  if (conditioned && role == CondRole::kAnalysis) {
    if (cond->variant == ConditioningVariant::kLatentScaling) {
      h = tape.mul(h, take(1));
    } else if (cond->variant == ConditioningVariant::kLatentAffine) {
      int64_t m = arch.output_dim();
      ValueId f = take(m);
      ValueId g = take(m);
      h = tape.add(tape.mul(h, f), g);
    }
  }
  return h;
}

Tensor mlp_forward(const MlpTransform& t, const Tensor& x, std::optional<CondQuery> cond,
                   bool* clamped) {
  t.validate();
  Tensor input = x;
  bool single = (x.ndim() == 1);
  if (single) input = Tensor({1, x.dim(0)}, std::vector<double>(x.data(), x.data() + x.size()));
  if (input.cols() != t.input_dim()) throw DimensionError("input dimension mismatch");
  Tape tape;
  BoundTransform bound = bind_transform(tape, t, false);
  ValueId xi = tape.constant(input);
  const ConditioningSpec* spec = cond ? cond->spec : nullptr;
  BoundCond bc;
  if (spec && spec->variant != ConditioningVariant::kNone)
    bc = bind_conditioning(tape, *spec, false);
  ValueId y = transform_forward(tape, t, bound, xi, spec, spec ? &bc : nullptr,
                                cond ? cond->lambda : 1.0, cond ? cond->role : CondRole::kAnalysis,
                                clamped);
  Tensor out = tape.value(y);
  if (single) return Tensor({out.cols()}, std::vector<double>(out.data(), out.data() + out.size()));
  return out;
}

// ---- KLT ----

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& q) {
  q.assign(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) q[static_cast<size_t>(i) * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a[static_cast<size_t>(i) * n + j] * a[static_cast<size_t>(i) * n + j];
    if (off < 1e-28) break;
    for (int p = 0; p < n - 1; ++p)
      for (int qq = p + 1; qq < n; ++qq) {
        double apq = a[static_cast<size_t>(p) * n + qq];
        if (std::fabs(apq) < 1e-300) continue;
        double app = a[static_cast<size_t>(p) * n + p];
        double aqq = a[static_cast<size_t>(qq) * n + qq];
        double theta = (aqq - app) / (2 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1));
        double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
        for (int k = 0; k < n; ++k) {
          double akp = a[static_cast<size_t>(k) * n + p], akq = a[static_cast<size_t>(k) * n + qq];
          a[static_cast<size_t>(k) * n + p] = c * akp - s * akq;
          a[static_cast<size_t>(k) * n + qq] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a[static_cast<size_t>(p) * n + k], aqk = a[static_cast<size_t>(qq) * n + k];
          a[static_cast<size_t>(p) * n + k] = c * apk - s * aqk;
          a[static_cast<size_t>(qq) * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          double qkp = q[static_cast<size_t>(k) * n + p], qkq = q[static_cast<size_t>(k) * n + qq];
          q[static_cast<size_t>(k) * n + p] = c * qkp - s * qkq;
          q[static_cast<size_t>(k) * n + qq] = s * qkp + c * qkq;
        }
      }
  }
}

struct Eigs {
  Tensor vectors;  // columns
  std::vector<double> values;
};

Eigs covariance_eigen(const Tensor& samples) {
  if (samples.ndim() != 2) throw DimensionError("samples must be [n x N]");
  int64_t n = samples.rows(), d = samples.cols();
  if (n < d + 1) throw DomainError("need at least N+1 samples");
  std::vector<double> mean(static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += samples.at(i, j);
  for (auto& m : mean) m /= static_cast<double>(n);
  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t a = 0; a < d; ++a)
      for (int64_t b = 0; b < d; ++b)
        cov[static_cast<size_t>(a) * d + b] += (samples.at(i, a) - mean[static_cast<size_t>(a)]) *
                                               (samples.at(i, b) - mean[static_cast<size_t>(b)]);
  for (auto& c : cov) c /= static_cast<double>(n - 1);

  std::vector<double> work = cov, q;
  jacobi_eigen(work, static_cast<int>(d), q);
  std::vector<double> eig(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i) eig[static_cast<size_t>(i)] = work[static_cast<size_t>(i) * d + i];

  std::vector<int> order(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return eig[static_cast<size_t>(a)] > eig[static_cast<size_t>(b)]; });

  double emax = std::max(eig[static_cast<size_t>(order[0])], 0.0);
  int rank = 0;
  for (int64_t i = 0; i < d; ++i)
    if (eig[static_cast<size_t>(i)] > 1e-12 * std::max(emax, 1e-300)) ++rank;
  if (rank < d)
    throw DomainError("degenerate covariance, rank " + std::to_string(rank) + " of " +
                      std::to_string(d));

  Eigs out;
  out.vectors = Tensor({d, d});
  out.values.resize(static_cast<size_t>(d));
  for (int64_t c = 0; c < d; ++c) {
    int src = order[static_cast<size_t>(c)];
    out.values[static_cast<size_t>(c)] = eig[static_cast<size_t>(src)];
    // Sign convention: largest-magnitude entry positive.
    int64_t argmax = 0;
    for (int64_t r = 1; r < d; ++r)
      if (std::fabs(q[static_cast<size_t>(r) * d + src]) >
          std::fabs(q[static_cast<size_t>(argmax) * d + src]))
        argmax = r;
    double sign = q[static_cast<size_t>(argmax) * d + src] >= 0 ? 1.0 : -1.0;
    for (int64_t r = 0; r < d; ++r)
      out.vectors.at(r, c) = sign * q[static_cast<size_t>(r) * d + src];
  }
  return out;
}

}  // namespace

Tensor klt_from_samples(const Tensor& samples) { return covariance_eigen(samples).vectors; }

std::vector<double> klt_eigenvalues(const Tensor& samples) {
  return covariance_eigen(samples).values;
}

}  // namespace ntc
