#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ntc/sources.hpp"
#include "ntc/transforms.hpp"

using namespace ntc;

namespace {

double softplus_ref(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

// Scalar layer-by-layer reference evaluation, independent of the tape path.
std::vector<double> reference_forward(const MlpTransform& t, std::vector<double> h) {
  for (const MlpLayer& l : t.layers) {
    int64_t out = l.weight.rows(), in = l.weight.cols();
    std::vector<double> r(static_cast<size_t>(out));
    for (int64_t o = 0; o < out; ++o) {
      double acc = l.bias[o];
      for (int64_t i = 0; i < in; ++i) acc += l.weight.at(o, i) * h[static_cast<size_t>(i)];
      r[static_cast<size_t>(o)] = acc;
    }
    if (l.nonlin == Nonlinearity::kSoftplus) {
      for (auto& v : r) v = softplus_ref(v);
    } else if (l.nonlin == Nonlinearity::kGdn) {
      std::vector<double> v(r.size());
      for (int64_t i = 0; i < out; ++i) {
        double beta = std::pow(std::max(l.beta_raw[i], kGdnBetaRawFloor), 2);
        double den = beta;
        for (int64_t j = 0; j < out; ++j)
          den += std::pow(std::max(l.gamma_raw.at(i, j), 0.0), 2) * std::fabs(r[static_cast<size_t>(j)]);
        v[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] / den;
      }
      r = v;
    }
    h = std::move(r);
  }
  return h;
}

}  // namespace

TEST_CASE("identity single layer is the identity map") {
  MlpTransform t = make_ltc(3);
  Tensor x({3}, {0.4, -2.0, 5.5});
  Tensor y = mlp_forward(t, x);
  for (int i = 0; i < 3; ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("random two-layer net matches scalar reference evaluation") {
  CounterRng rng(31);
  MlpTransform t = make_mlp(2, 5, 2, 2, Nonlinearity::kSoftplus, rng);
  Tensor x({2}, {0.7, -1.3});
  Tensor y = mlp_forward(t, x);
  auto ref = reference_forward(t, {0.7, -1.3});
  CHECK(y[0] == doctest::Approx(ref[0]).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(ref[1]).epsilon(1e-14));

  // Same for a gdn net.
  MlpTransform tg = make_mlp(2, 4, 2, 3, Nonlinearity::kGdn, rng);
  Tensor yg = mlp_forward(tg, x);
  auto refg = reference_forward(tg, {0.7, -1.3});
  CHECK(yg[0] == doctest::Approx(refg[0]).epsilon(1e-13));
  CHECK(yg[1] == doctest::Approx(refg[1]).epsilon(1e-13));
}

TEST_CASE("spline evaluation: constants, linearity, interior oracle, clamping") {
  std::vector<double> k2 = {0.0, 1.0};
  std::vector<double> vconst = {4.2, 4.2};
  for (double t : {-1.0, 0.0, 0.3, 0.9, 1.0, 7.0}) CHECK(spline_eval(k2, vconst, t) == 4.2);

  std::vector<double> v2 = {0.0, 10.0};
  CHECK(spline_eval(k2, v2, 0.5) == doctest::Approx(5.0));
  CHECK(spline_eval(k2, v2, -3.0) == 0.0);
  CHECK(spline_eval(k2, v2, 3.0) == 10.0);

  CounterRng rng(12);
  std::vector<double> knots(25), values(25);
  for (int i = 0; i < 25; ++i) {
    knots[static_cast<size_t>(i)] = i * 0.37;
    values[static_cast<size_t>(i)] = 3 * (rng.next_uniform() - 0.5);
  }
  double q = knots[7] + 0.61 * (knots[8] - knots[7]);
  double expect = values[7] + 0.61 * (values[8] - values[7]);
  CHECK(spline_eval(knots, values, q) == doctest::Approx(expect).epsilon(1e-13));
  // Exact at knots.
  for (int i = 0; i < 25; ++i)
    CHECK(spline_eval(knots, values, knots[static_cast<size_t>(i)]) ==
          doctest::Approx(values[static_cast<size_t>(i)]).epsilon(1e-13));
}

TEST_CASE("neutral conditioning is exactly the identity insertion, every variant") {
  CounterRng rng(63);
  MlpTransform ga = make_mlp(2, 6, 2, 4, Nonlinearity::kSoftplus, rng);
  MlpTransform gs = make_mlp(2, 6, 2, 4, Nonlinearity::kSoftplus, rng);
  MlpTransform ga_g = make_mlp(2, 5, 2, 3, Nonlinearity::kGdn, rng);
  MlpTransform gs_g = make_mlp(2, 5, 2, 3, Nonlinearity::kGdn, rng);

  Tensor x({2}, {0.45, -0.8});
  for (ConditioningVariant v :
       {ConditioningVariant::kLatentScaling, ConditioningVariant::kLatentAffine,
        ConditioningVariant::kLayerScaling, ConditioningVariant::kLayerAffine,
        ConditioningVariant::kGdnParams}) {
    const MlpTransform& a = (v == ConditioningVariant::kGdnParams) ? ga_g : ga;
    const MlpTransform& s = (v == ConditioningVariant::kGdnParams) ? gs_g : gs;
    ConditioningSpec spec = ConditioningSpec::make(v, a, s, std::log2(5.0), std::log2(500.0), 9);
    for (double lambda : {5.0, 17.0, 500.0}) {
      Tensor plain_a = mlp_forward(a, x);
      Tensor cond_a = mlp_forward(a, x, CondQuery{&spec, lambda, CondRole::kAnalysis});
      Tensor plain_s = mlp_forward(s, x);
      Tensor cond_s = mlp_forward(s, x, CondQuery{&spec, lambda, CondRole::kSynthesis});
      for (int i = 0; i < 2; ++i) {
        CHECK(cond_a[i] == doctest::Approx(plain_a[i]).epsilon(1e-13));
        CHECK(cond_s[i] == doctest::Approx(plain_s[i]).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("out-of-range lambda clamps and raises the warning flag") {
  CounterRng rng(64);
  MlpTransform ga = make_mlp(1, 3, 1, 2, Nonlinearity::kSoftplus, rng);
  MlpTransform gs = make_mlp(1, 3, 1, 2, Nonlinearity::kSoftplus, rng);
  ConditioningSpec spec =
      ConditioningSpec::make(ConditioningVariant::kLayerScaling, ga, gs, 2.0, 5.0, 4);
  // Make the spline non-constant so clamping is observable.
  for (int64_t r = 0; r < spec.site_values.rows(); ++r)
    for (int64_t k = 0; k < spec.site_values.cols(); ++k)
      spec.site_values.at(r, k) = 1.0 + 0.1 * static_cast<double>(k);

  Tensor x({1}, {0.3});
  bool clamped = false;
  Tensor lo = mlp_forward(ga, x, CondQuery{&spec, 1.0, CondRole::kAnalysis}, &clamped);
  CHECK(clamped);
  Tensor at_lo = mlp_forward(ga, x, CondQuery{&spec, 4.0, CondRole::kAnalysis});  // log2 = 2
  CHECK(lo[0] == doctest::Approx(at_lo[0]).epsilon(1e-13));

  clamped = false;
  mlp_forward(ga, x, CondQuery{&spec, 16.0, CondRole::kAnalysis}, &clamped);  // log2 = 4, inside
  CHECK(!clamped);
}

TEST_CASE("gdn_params conditioning equals a plain gdn net with the spline values") {
  CounterRng rng(65);
  MlpTransform ga = make_mlp(2, 4, 2, 3, Nonlinearity::kGdn, rng);
  MlpTransform gs = make_mlp(2, 4, 2, 3, Nonlinearity::kGdn, rng);
  ConditioningSpec spec =
      ConditioningSpec::make(ConditioningVariant::kGdnParams, ga, gs, 1.0, 6.0, 7);
  // Perturb the spline so beta(lambda), gamma(lambda) differ from stored.
  CounterRng prng = rng.fork("perturb");
  for (int64_t i = 0; i < spec.site_values.size(); ++i)
    spec.site_values[i] += 0.3 * (prng.next_uniform() - 0.5);

  double lambda = 11.0;
  double t = std::log2(lambda);
  // Build the equivalent plain net by evaluating each site's spline at t.
  MlpTransform plain = ga;
  int64_t row = 0;
  for (MlpLayer& l : plain.layers) {
    if (l.nonlin != Nonlinearity::kGdn) continue;
    for (int64_t i = 0; i < l.beta_raw.size(); ++i, ++row) {
      std::vector<double> vals(static_cast<size_t>(spec.site_values.cols()));
      for (int64_t k = 0; k < spec.site_values.cols(); ++k) vals[static_cast<size_t>(k)] = spec.site_values.at(row, k);
      l.beta_raw[i] = spline_eval(spec.knots, vals, t);
    }
    for (int64_t i = 0; i < l.gamma_raw.size(); ++i, ++row) {
      std::vector<double> vals(static_cast<size_t>(spec.site_values.cols()));
      for (int64_t k = 0; k < spec.site_values.cols(); ++k) vals[static_cast<size_t>(k)] = spec.site_values.at(row, k);
      l.gamma_raw[i] = spline_eval(spec.knots, vals, t);
    }
  }
  Tensor x({2}, {1.2, -0.4});
  Tensor a = mlp_forward(ga, x, CondQuery{&spec, lambda, CondRole::kAnalysis});
  Tensor b = mlp_forward(plain, x);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));
  CHECK(a[1] == doctest::Approx(b[1]).epsilon(1e-12));
}

TEST_CASE("finite-difference jacobian matches autodiff jacobian") {
  CounterRng rng(66);
  MlpTransform t = make_mlp(2, 8, 2, 4, Nonlinearity::kSoftplus, rng);
  for (int trial = 0; trial < 5; ++trial) {
    CounterRng prng = rng.fork(100 + static_cast<uint64_t>(trial));
    Tensor x({1, 2}, {2 * (prng.next_uniform() - 0.5), 2 * (prng.next_uniform() - 0.5)});
    // Autodiff jacobian: one backward pass per output dimension.
    Tape tape;
    BoundTransform bound = bind_transform(tape, t, false);
    ValueId xi = tape.leaf(x);
    ValueId y = transform_forward(tape, t, bound, xi, nullptr, nullptr, 1.0, CondRole::kAnalysis);
    double jac[2][2];
    for (int64_t j = 0; j < 2; ++j) {
      std::vector<ValueId> wrt = {xi};
      auto g = tape.gradients(tape.sum_all(tape.slice_col(y, j)), wrt);
      jac[j][0] = g[0][0];
      jac[j][1] = g[0][1];
    }
    // Central differences.
    double eps = 1e-5;
    for (int64_t c = 0; c < 2; ++c) {
      Tensor xp = x, xm = x;
      xp[c] += eps;
      xm[c] -= eps;
      Tensor yp = mlp_forward(t, xp), ym = mlp_forward(t, xm);
      for (int64_t r = 0; r < 2; ++r) {
        double fd = (yp[r] - ym[r]) / (2 * eps);
        double a = jac[r][c];
        CHECK(std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)}) < 1e-4);
      }
    }
  }
}

TEST_CASE("klt orthonormality, eigenstructure and reconstruction") {
  CounterRng rng(67);
  // Isotropic: only orthonormality is predictable.
  Tensor iso({500, 2});
  for (int64_t i = 0; i < iso.size(); ++i) iso[i] = rng.next_normal();
  Tensor q = klt_from_samples(iso);
  for (int64_t a = 0; a < 2; ++a)
    for (int64_t b = 0; b < 2; ++b) {
      double dot = 0;
      for (int64_t r = 0; r < 2; ++r) dot += q.at(r, a) * q.at(r, b);
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-10));
    }

  // Diagonal covariance diag(4, 1): first column aligns with the 4-axis.
  Tensor dg({4000, 2});
  for (int64_t i = 0; i < dg.rows(); ++i) {
    dg.at(i, 0) = 2.0 * rng.next_normal();
    dg.at(i, 1) = rng.next_normal();
  }
  Tensor qd = klt_from_samples(dg);
  CHECK(std::fabs(qd.at(0, 0)) > 0.99);
  CHECK(std::fabs(qd.at(1, 1)) > 0.99);
  CHECK(qd.at(0, 0) > 0);  // sign convention

  // Banana: Q Lambda Q^T reconstructs the sample covariance.
  Tensor bs = sample_source(SourceSpec::banana(), 20000, 5u);
  Tensor qb = klt_from_samples(bs);
  std::vector<double> lam = klt_eigenvalues(bs);
  // Sample covariance.
  double mean[2] = {0, 0}, cov[2][2] = {{0, 0}, {0, 0}};
  for (int64_t i = 0; i < bs.rows(); ++i) {
    mean[0] += bs.at(i, 0);
    mean[1] += bs.at(i, 1);
  }
  mean[0] /= static_cast<double>(bs.rows());
  mean[1] /= static_cast<double>(bs.rows());
  for (int64_t i = 0; i < bs.rows(); ++i)
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        cov[r][c] += (bs.at(i, r) - mean[r]) * (bs.at(i, c) - mean[c]);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) cov[r][c] /= static_cast<double>(bs.rows() - 1);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      double recon = 0;
      for (int k = 0; k < 2; ++k) recon += qb.at(r, k) * lam[static_cast<size_t>(k)] * qb.at(c, k);
      CHECK(recon == doctest::Approx(cov[r][c]).epsilon(1e-8));
    }

  // Degenerate covariance names the rank.
  Tensor flat({10, 2});
  for (int64_t i = 0; i < flat.rows(); ++i) flat.at(i, 0) = static_cast<double>(i);
  CHECK_THROWS_AS(klt_from_samples(flat), DomainError);
  CHECK_THROWS_AS(klt_from_samples(Tensor({2, 2})), DomainError);
}
