#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rwave/json_io.hpp"
#include "rwave/parallel.hpp"
#include "rwave/series.hpp"

using namespace rwave;

namespace {

FourierSeries1D random_series(int N, std::mt19937& rng, bool real_valued) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FourierSeries1D f(N, Parity::kNone, real_valued);
  for (int n = 0; n <= N; ++n) {
    const Complex c(u(rng), u(rng));
    f.set_coeff(n, c);
    if (n > 0) f.set_coeff(-n, real_valued ? std::conj(c) : Complex(u(rng), u(rng)));
  }
  if (real_valued) f.set_coeff(0, Complex(f.coeff(0).real(), 0.0));
  return f;
}

// Pointwise-product oracle: sample both factors on a grid fine enough for
// the product's bandwidth, multiply values, then recover coefficients by a
// plain DFT sum. Exact for trigonometric polynomials.
FourierSeries1D multiply_oracle(const FourierSeries1D& f,
                                const FourierSeries1D& g, int n_out) {
  const int M = 2 * (f.N + g.N) + 1;
  FourierSeries1D out(n_out);
  for (int n = -n_out; n <= n_out; ++n) {
    Complex acc(0.0, 0.0);
    for (int j = 0; j < M; ++j) {
      const double xi = 2.0 * oracle::kPi * j / M;
      acc += f.eval(xi) * g.eval(xi) * std::polar(1.0, -n * xi);
    }
    out.set_coeff(n, acc / static_cast<double>(M));
  }
  return out;
}

double max_diff(const FourierSeries1D& a, const FourierSeries1D& b) {
  double worst = 0.0;
  const int N = std::max(a.N, b.N);
  for (int n = -N; n <= N; ++n)
    worst = std::max(worst, std::abs(a.coeff(n) - b.coeff(n)));
  return worst;
}

}  // namespace

TEST_CASE("projection removes the mean and is idempotent") {
  std::mt19937 rng(11);
  FourierSeries1D c(4);
  c.set_coeff(0, {3.25, 0.0});
  const auto pc = project_P(c);
  for (int n = -4; n <= 4; ++n) CHECK(pc.coeff(n) == Complex(0.0, 0.0));

  const auto f = random_series(9, rng, true);
  const auto pf = project_P(f);
  CHECK(pf.mean() == Complex(0.0, 0.0));
  CHECK(max_diff(project_P(pf), pf) == 0.0);
}

TEST_CASE("antiderivative matches closed forms and inverts differentiation") {
  // sin(3 xi) -> -cos(3 xi)/3.
  FourierSeries1D s(5, Parity::kOdd);
  s.set_coeff(3, Complex(0.0, -0.5));
  s.set_coeff(-3, Complex(0.0, 0.5));
  const auto is = integrate_I(s);
  CHECK(std::abs(is.coeff(3) - Complex(-1.0 / 6.0, 0.0)) < 1e-16);
  CHECK(std::abs(is.coeff(-3) - Complex(-1.0 / 6.0, 0.0)) < 1e-16);
  CHECK(is.parity == Parity::kEven);

  std::mt19937 rng(7);
  const auto f = project_P(random_series(12, rng, true));
  CHECK(max_diff(differentiate(integrate_I(f)), f) < 1e-15);
  const auto ipf = integrate_I(f);
  CHECK(max_diff(project_P(ipf), ipf) == 0.0);

  FourierSeries1D bad(3);
  bad.set_coeff(0, {1.0, 0.0});
  CHECK_THROWS(integrate_I(bad));
}

TEST_CASE("multiplication: identity, parity, and pointwise oracle") {
  std::mt19937 rng(23);
  FourierSeries1D one(2, Parity::kEven);
  one.set_coeff(0, {1.0, 0.0});
  const auto f = random_series(6, rng, true);
  CHECK(max_diff(multiply(f, one), f) < 1e-16);

  FourierSeries1D sn(3, Parity::kOdd);
  sn.set_coeff(1, Complex(0.0, -0.5));
  sn.set_coeff(-1, Complex(0.0, 0.5));
  const auto s2 = multiply(sn, sn);
  CHECK(s2.parity == Parity::kEven);
  for (int n = -3; n <= 3; n += 2) CHECK(std::abs(s2.coeff(n)) == 0.0);

  const auto g = random_series(4, rng, true);
  const auto prod = multiply(f, g);
  const auto ref = multiply_oracle(f, g, prod.N);
  CHECK(max_diff(prod, ref) < 1e-13);
}

TEST_CASE("convolution algebra on random triples") {
  std::mt19937 rng(39);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 5; ++rep) {
    // Commutativity is unconditional.
    const auto f = random_series(7, rng, false);
    const auto g = random_series(7, rng, false);
    CHECK(max_diff(multiply(f, g), multiply(g, f)) < 1e-14);

    // Associativity needs the containers to hold the full product band:
    // band-4 data inside cutoff-12 containers keeps everything exact.
    FourierSeries1D a(12), b(12), c(12);
    for (int n = -4; n <= 4; ++n) {
      a.set_coeff(n, Complex(u(rng), u(rng)));
      b.set_coeff(n, Complex(u(rng), u(rng)));
      c.set_coeff(n, Complex(u(rng), u(rng)));
    }
    const auto ab_c = multiply(multiply(a, b), c);
    const auto a_bc = multiply(a, multiply(b, c));
    CHECK(max_diff(ab_c, a_bc) < 1e-13);
  }
}

TEST_CASE("weighted norm counts stored modes and grows in the weight") {
  FourierSeries2D z(3);
  CHECK(weighted_norm(z, 0.7) == 0.0);

  FourierSeries2D raw(3);
  raw.set_coeff(1, 1, Complex(0.0, 1.0));
  const auto u = symmetrize_dirichlet(raw);
  // Images (±1, ±1) each carry modulus 1/4 after projection: total 1 at r=0.
  CHECK(weighted_norm(u, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(weighted_norm(u, 0.3) > weighted_norm(u, 0.1));
}

TEST_CASE("decay fit recovers constructed rates") {
  FourierSeries1D f(15, Parity::kOdd);
  for (int n = 1; n <= 15; n += 2) {
    const double a = std::exp(-1.0 * n);
    f.set_coeff(n, Complex(0.0, -0.5 * a));
    f.set_coeff(-n, Complex(0.0, 0.5 * a));
  }
  const auto fit = fit_decay(f);
  CHECK(std::abs(fit.kappa - 0.5) < 1e-6);
  CHECK(std::abs(fit.alpha - 0.5) < 1e-6);

  const auto doubled = fit_decay(scale(f, Complex(2.0, 0.0)));
  CHECK(std::abs(doubled.kappa - fit.kappa) < 1e-12);
  CHECK(std::abs(doubled.alpha - 2.0 * fit.alpha) < 1e-6);

  FourierSeries1D sparse(9, Parity::kOdd);
  sparse.set_coeff(1, Complex(0.0, 1.0));
  sparse.set_coeff(-1, Complex(0.0, -1.0));
  CHECK_THROWS(fit_decay(sparse));
}

TEST_CASE("dirichlet symmetrization is exact") {
  std::mt19937 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FourierSeries2D raw(5, false);
  for (int n = -5; n <= 5; ++n)
    for (int m = -5; m <= 5; ++m) raw.set_coeff(n, m, Complex(u(rng), u(rng)));
  const auto sym = symmetrize_dirichlet(raw);
  CHECK(dirichlet_defect(sym) == 0.0);
  // Projection: applying it twice changes nothing.
  CHECK(dirichlet_defect(symmetrize_dirichlet(sym)) == 0.0);
  double worst = 0.0;
  const auto twice = symmetrize_dirichlet(sym);
  for (int n = -5; n <= 5; ++n)
    for (int m = -5; m <= 5; ++m)
      worst = std::max(worst, std::abs(twice.coeff(n, m) - sym.coeff(n, m)));
  CHECK(worst == 0.0);
}

TEST_CASE("sampled energy matches coefficient energy") {
  std::mt19937 rng(55);
  const auto f = random_series(10, rng, false);
  const int M = 2 * f.N + 1;
  double sampled = 0.0;
  for (int j = 0; j < M; ++j) {
    const double xi = 2.0 * oracle::kPi * j / M;
    sampled += std::norm(f.eval(xi));
  }
  sampled /= M;
  double coeff = 0.0;
  for (int n = -f.N; n <= f.N; ++n) coeff += std::norm(f.coeff(n));
  CHECK(std::abs(sampled - coeff) / coeff < 1e-10);
}

TEST_CASE("json round trip is lossless with stable ordering") {
  std::mt19937 rng(77);
  const auto f = random_series(6, rng, true);
  const auto text = to_json(f);
  CHECK(text == to_json(f));
  const auto back = series1d_from_json(text);
  CHECK(back.N == f.N);
  CHECK(back.parity == f.parity);
  CHECK(back.reality == f.reality);
  CHECK(max_diff(back, f) == 0.0);

  FourierSeries2D raw(4, false);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n = -4; n <= 4; ++n)
    for (int m = -4; m <= 4; ++m) raw.set_coeff(n, m, Complex(u(rng), u(rng)));
  const auto sym = symmetrize_dirichlet(raw);
  const auto back2 = series2d_from_json(to_json(sym));
  CHECK(back2.N == sym.N);
  CHECK(back2.dirichlet_symmetry == sym.dirichlet_symmetry);
  double worst = 0.0;
  for (int n = -4; n <= 4; ++n)
    for (int m = -4; m <= 4; ++m)
      worst = std::max(worst, std::abs(back2.coeff(n, m) - sym.coeff(n, m)));
  CHECK(worst == 0.0);
}

TEST_CASE("parallel convolution kernel agrees with the serial reference") {
  std::mt19937 rng(91);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FourierSeries2D a(6, false), b(6, false);
  for (int n = -6; n <= 6; ++n)
    for (int m = -6; m <= 6; ++m) {
      a.set_coeff(n, m, Complex(u(rng), u(rng)));
      b.set_coeff(n, m, Complex(u(rng), u(rng)));
    }
  const auto s = conv2d_serial(a, b, 6);
  const auto p = conv2d_parallel(a, b, 6);
  double worst = 0.0;
  for (int n = -6; n <= 6; ++n)
    for (int m = -6; m <= 6; ++m)
      worst = std::max(worst, std::abs(s.coeff(n, m) - p.coeff(n, m)));
  CHECK(worst == 0.0);

  // Spot-check one entry against a direct loop.
  Complex direct(0.0, 0.0);
  for (int n1 = -6; n1 <= 6; ++n1)
    for (int m1 = -6; m1 <= 6; ++m1)
      direct += a.coeff(n1, m1) * b.coeff(2 - n1, -3 - m1);
  CHECK(std::abs(s.coeff(2, -3) - direct) < 1e-15);
}
