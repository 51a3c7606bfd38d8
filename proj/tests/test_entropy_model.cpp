#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ntc/entropy_model.hpp"
#include "ntc/tape.hpp"

using namespace ntc;

namespace {

// Gauss-Legendre 16-point quadrature of the mixture pdf over [v-1/2, v+1/2];
// independent of the closed-form CDF path.
double bin_mass_quadrature(const LogisticMixtureDensity::Dim& d, double v) {
  static const double xs[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                               0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                               0.9445750230732326, 0.9894009349916499};
  static const double ws[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                               0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                               0.0622535239386479, 0.0271524594117541};
  double acc = 0;
  for (int i = 0; i < 8; ++i) {
    for (double sgn : {-1.0, 1.0}) {
      double t = v + sgn * 0.5 * xs[i];
      acc += ws[i] * 0.5 * mixture_pdf(d, t);
    }
  }
  return acc;
}

LogisticMixtureDensity random_model(int64_t m, int64_t c, uint64_t seed) {
  LogisticMixtureDensity d = LogisticMixtureDensity::make(m, c, 3.0, 0.0);
  CounterRng rng(seed);
  for (auto& dim : d.dims) {
    for (int64_t i = 0; i < c; ++i) {
      dim.logits[i] = 2 * (rng.next_uniform() - 0.5);
      dim.locs[i] += rng.next_normal();
      dim.log_scales[i] = -0.5 + rng.next_uniform();
    }
  }
  return d;
}

}  // namespace

TEST_CASE("huge-scale mixture is locally flat") {
  LogisticMixtureDensity d = LogisticMixtureDensity::make(1, 1, 0.0, 8.0);  // scale ~ 3000
  double a = bin_mass(d.dims[0], 0.0);
  double b = bin_mass(d.dims[0], 7.0);
  CHECK(a / b == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("lattice masses telescope to one") {
  LogisticMixtureDensity d = random_model(1, 8, 21);
  for (double o : {-0.37, 0.0, 0.22}) {
    double total = 0;
    for (int k = -60; k <= 60; ++k) total += bin_mass(d.dims[0], k + o);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("bin mass matches quadrature of the pdf") {
  LogisticMixtureDensity d = random_model(1, 8, 22);
  CounterRng rng(23);
  for (int t = 0; t < 30; ++t) {
    double v = 8 * (rng.next_uniform() - 0.5);
    CHECK(bin_mass(d.dims[0], v) == doctest::Approx(bin_mass_quadrature(d.dims[0], v)).epsilon(1e-9));
  }
}

TEST_CASE("discrete pmf: symmetry, exact unit sum, translation consistency") {
  // Symmetric model about zero.
  LogisticMixtureDensity sym = LogisticMixtureDensity::make(1, 2, 1.5, -0.3);
  Tensor o0({1}, {0.0});
  auto tables = discrete_pmf(sym, o0);
  const PmfTable& t = tables[0];
  for (int64_t k = t.kmin; k <= t.kmax(); ++k) {
    if (-k >= t.kmin && -k <= t.kmax())
      CHECK(t.prob_clamped(k) == doctest::Approx(t.prob_clamped(-k)).epsilon(1e-10));
  }
  double sum = 0;
  for (double p : t.p) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));

  // Integer translation of the locations permutes the table.
  LogisticMixtureDensity d = random_model(1, 4, 24);
  LogisticMixtureDensity shifted = d;
  for (int64_t i = 0; i < shifted.dims[0].locs.size(); ++i) shifted.dims[0].locs[i] += 3.0;
  Tensor o({1}, {0.17});
  auto ta = discrete_pmf(d, o);
  auto tb = discrete_pmf(shifted, o);
  for (int64_t k = ta[0].kmin + 1; k < ta[0].kmax(); ++k)
    CHECK(ta[0].prob_clamped(k) == doctest::Approx(tb[0].prob_clamped(k + 3)).epsilon(1e-9));
}

TEST_CASE("mode-centered offset") {
  // Single logistic at 3.2 -> offset 0.2.
  LogisticMixtureDensity d = LogisticMixtureDensity::make(1, 1, 0.0, -1.0);
  d.dims[0].locs[0] = 3.2;
  Tensor o = select_offset_mode(d);
  CHECK(o[0] == doctest::Approx(0.2).epsilon(1e-6));

  // Symmetric model at 0 -> offset 0.
  LogisticMixtureDensity s = LogisticMixtureDensity::make(1, 3, 1.0, -0.5);
  CHECK(std::fabs(select_offset_mode(s)[0]) < 1e-6);

  // Clearly bimodal: falls back to the median, still lands in [-1/2, 1/2).
  LogisticMixtureDensity bi = LogisticMixtureDensity::make(1, 2, 4.0, -2.0);
  Tensor ob = select_offset_mode(bi);
  CHECK(ob[0] >= -0.5);
  CHECK(ob[0] < 0.5);
}

TEST_CASE("noisy rate on tape matches scalar evaluation and passes grad_check") {
  LogisticMixtureDensity d = random_model(2, 4, 25);
  Tensor v({3, 2}, {0.3, -1.2, 2.0, 0.4, -0.7, 1.1});

  Tape tape;
  BoundDensity bd = bind_density(tape, d, true);
  ValueId rate = density_rate_bits(tape, bd, tape.constant(v));
  double expect = 0;
  for (int64_t i = 0; i < 3; ++i) expect -= noisy_log2_density(d, v.data() + 2 * i) / 3.0;
  CHECK(tape.value(rate)[0] == doctest::Approx(expect).epsilon(1e-12));

  ScalarFn fn = [&](Tape& t, std::span<const ValueId> in) {
    BoundDensity b;
    b.dims.push_back({in[0], in[1], in[2]});
    b.dims.push_back({in[3], in[4], in[5]});
    return density_rate_bits(t, b, t.constant(v));
  };
  std::vector<Tensor> point = {d.dims[0].logits, d.dims[0].locs, d.dims[0].log_scales,
                               d.dims[1].logits, d.dims[1].locs, d.dims[1].log_scales};
  CHECK(grad_check(fn, point, 1e-5) < 1e-4);
}
