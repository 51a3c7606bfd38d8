#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "ntc/oracles.hpp"

using namespace ntc;

namespace {

// Composite Simpson on [a,b].
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

double laplace_pdf(double x) { return 0.5 * std::exp(-std::fabs(x)); }

}  // namespace

TEST_CASE("sullivan closed forms match brute-force quadrature of the family member") {
  // Independent oracle: integrate rate/distortion of the (delta, c) quantizer
  // numerically and compare with the geometric-series closed forms.
  for (auto [lambda, delta, c] : {std::tuple{30.0, 0.55, 0.31}, std::tuple{100.0, 0.3, 0.18},
                                  std::tuple{7.0, 1.2, 0.8}}) {
    double rate_cf = 0, dist_cf = 0;
    sullivan_lagrangian(lambda, delta, c, &rate_cf, &dist_cf);

    // Enumerate bins far into the tail.
    double rate_q = 0, dist_q = 0;
    {
      double p0 = simpson(laplace_pdf, -c, c, 4000);
      rate_q -= p0 * std::log2(p0);
      double dc = simpson([&](double x) { return x * x * laplace_pdf(x); }, -c, c, 4000);
      dist_q += dc;
      for (int k = 1; k < 90; ++k) {
        double a = c + (k - 1) * delta, b = c + k * delta;
        double pk = simpson(laplace_pdf, a, b, 600);
        if (pk < 1e-14) break;
        double m = simpson([&](double x) { return x * laplace_pdf(x); }, a, b, 600) / pk;
        double dk = simpson([&](double x) { return (x - m) * (x - m) * laplace_pdf(x); }, a, b, 600);
        rate_q -= 2 * pk * std::log2(pk);
        dist_q += 2 * dk;
      }
    }
    CHECK(rate_cf == doctest::Approx(rate_q).epsilon(1e-7));
    CHECK(dist_cf == doctest::Approx(dist_q).epsilon(1e-7));
  }
}

TEST_CASE("sullivan optimum: degenerate low-lambda limit and symmetry") {
  SullivanResult low = sullivan_ecsq(1e-4);
  CHECK(low.point.rate < 1e-3);
  CHECK(low.point.distortion == doctest::Approx(2.0).epsilon(1e-3));

  SullivanResult s = sullivan_ecsq(100.0);
  const QuantizerDescription& d = s.desc;
  int64_t ns = d.symbol_count();
  for (int64_t k = 0; k < ns; ++k) {
    CHECK(d.codevectors[static_cast<size_t>(k)] ==
          doctest::Approx(-d.codevectors[static_cast<size_t>(ns - 1 - k)]).epsilon(1e-12));
    CHECK(d.pmf[static_cast<size_t>(k)] ==
          doctest::Approx(d.pmf[static_cast<size_t>(ns - 1 - k)]).epsilon(1e-12));
  }
  for (size_t b = 0; b < d.boundaries.size(); ++b)
    CHECK(d.boundaries[b] == doctest::Approx(-d.boundaries[d.boundaries.size() - 1 - b]).epsilon(1e-12));

  // Optimality within the family: perturbing the parameters never helps.
  double best = s.point.lagrangian();
  for (double fd : {0.97, 1.03})
    for (double fc : {0.95, 1.05}) {
      double l = sullivan_lagrangian(100.0, s.outer_width * fd, s.center_halfwidth * fc, nullptr,
                                     nullptr);
      CHECK(l >= best - 1e-9);
    }
}

TEST_CASE("sullivan closed form agrees with its own monte-carlo evaluation") {
  SullivanResult s = sullivan_ecsq(100.0);
  RdPoint mc = evaluate_quantizer(s.desc, SourceSpec::laplace(), 10000000, 77u);
  CHECK(std::fabs(mc.rate - s.point.rate) < 3 * mc.rate_se());
  CHECK(std::fabs(mc.distortion - s.point.distortion) < 3 * mc.dist_se());
}

TEST_CASE("single-cell quantizer on laplace: rate zero, distortion two") {
  QuantizerDescription d;
  d.dimension = 1;
  d.cell_symbol = {0};
  d.codevectors = {0.0};
  d.pmf = {1.0};
  RdPoint p = evaluate_quantizer(d, SourceSpec::laplace(), 200000, 3u);
  CHECK(p.rate == 0.0);
  CHECK(std::fabs(p.distortion - 2.0) < 3 * p.dist_se());
}

TEST_CASE("unit-step uniform quantizer matches closed-form laplace integrals") {
  // Bins [k-1/2, k+1/2) with midpoint codevectors; reference rate/distortion
  // from per-bin Simpson integration.
  const int kmax = 40;
  QuantizerDescription d;
  d.dimension = 1;
  double rate_ref = 0, dist_ref = 0;
  for (int k = -kmax; k <= kmax; ++k) {
    double a = k - 0.5, b = k + 0.5;
    double pk;
    if (k == -kmax)
      pk = simpson(laplace_pdf, -kmax - 30.0, b, 20000);
    else if (k == kmax)
      pk = simpson(laplace_pdf, a, kmax + 30.0, 20000);
    else
      pk = simpson(laplace_pdf, a, b, 400);
    d.pmf.push_back(pk);
    d.codevectors.push_back(k);
    if (k < kmax) d.boundaries.push_back(b);
    d.cell_symbol.push_back(static_cast<int32_t>(d.pmf.size() - 1));
    rate_ref -= pk * std::log2(std::max(pk, 1e-300));
    double dk = simpson([&](double x) { return (x - k) * (x - k) * laplace_pdf(x); },
                        k == -kmax ? -kmax - 30.0 : a, k == kmax ? kmax + 30.0 : b, 4000);
    dist_ref += dk;
  }
  double sum = 0;
  for (double p : d.pmf) sum += p;
  for (double& p : d.pmf) p /= sum;

  RdPoint mc = evaluate_quantizer(d, SourceSpec::laplace(), 2000000, 5u);
  CHECK(std::fabs(mc.rate - rate_ref) < 3 * mc.rate_se() + 1e-6);
  CHECK(std::fabs(mc.distortion - dist_ref) < 3 * mc.dist_se() + 1e-6);

  // Cross entropy >= entropy: a mismatched pmf strictly raises the rate.
  QuantizerDescription skew = d;
  for (size_t i = 0; i < skew.pmf.size(); ++i)
    skew.pmf[i] = 1.0 / static_cast<double>(skew.pmf.size());
  RdPoint mc2 = evaluate_quantizer(skew, SourceSpec::laplace(), 200000, 5u);
  CHECK(mc2.rate > mc.rate + 0.1);
}

TEST_CASE("blahut-arimoto: gaussian closed form within 0.02 bits") {
  BaGrid g = ba_grid_gaussian(1.0, 2048);
  // lambda chosen so the optimum sits near D = 0.25.
  BaResult r = blahut_arimoto(g, 2.0 / kLn2, 20000, 1e-6);
  CHECK(r.point.distortion == doctest::Approx(0.25).epsilon(0.02));
  double closed = 0.5 * std::log2(1.0 / r.point.distortion);
  CHECK(std::fabs(r.point.rate - closed) < 0.02);
}

TEST_CASE("blahut-arimoto: zero-rate limit and monotone sweep on laplace") {
  BaGrid g = ba_grid_for(SourceSpec::laplace(), 2048);
  BaResult low = blahut_arimoto(g, 1e-3, 20000, 1e-6);
  CHECK(low.point.rate < 0.01);

  std::vector<double> warm;
  double prev_rate = -1, prev_dist = 1e300;
  for (double lam : {3.0, 10.0, 30.0, 100.0}) {
    BaResult r = blahut_arimoto(g, lam, 40000, 1e-6, &warm);
    CHECK(r.point.rate >= prev_rate - 1e-6);
    CHECK(r.point.distortion <= prev_dist + 1e-9);
    prev_rate = r.point.rate;
    prev_dist = r.point.distortion;

    // Information-theoretic bound: R(D) lies below the best scalar quantizer.
    SullivanResult s = sullivan_ecsq(lam);
    CHECK(r.point.lagrangian() <= s.point.lagrangian() + 1e-3);
  }
}
