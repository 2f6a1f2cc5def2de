#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rwave/elliptic.hpp"

using namespace rwave;

TEST_CASE("complete elliptic integrals against quadrature") {
  for (double m : {-0.9, -0.6, -0.3, -0.2554442273678654, -0.05, 0.0, 0.35,
                   0.5, 0.8}) {
    CAPTURE(m);
    CHECK(std::abs(complete_elliptic_K(m) - oracle::elliptic_K_quadrature(m)) <
          1e-12);
    CHECK(std::abs(complete_elliptic_E(m) - oracle::elliptic_E_quadrature(m)) <
          1e-12);
  }
}

TEST_CASE("complete elliptic integrals against frozen references") {
  CHECK(std::abs(complete_elliptic_K(0.5) - oracle::kK_half) < 1e-14);
  CHECK(std::abs(complete_elliptic_K(-0.3) - oracle::kK_m03) < 1e-14);
  CHECK(std::abs(complete_elliptic_E(-0.3) - oracle::kE_m03) < 1e-14);
  CHECK(std::abs(complete_elliptic_K(oracle::kModulus) - oracle::kKstar) <
        1e-14);
  CHECK(std::abs(complete_elliptic_E(oracle::kModulus) - oracle::kEstar) <
        1e-14);
}

TEST_CASE("jacobi functions against RK4 oracle and references") {
  struct Pt {
    double u, m;
  };
  const Pt pts[] = {{0.7, oracle::kModulus}, {2.3, -0.6}, {-1.1, 0.35},
                    {0.31, -0.255},          {3.9, -0.9}, {-2.7, 0.6}};
  for (const auto& p : pts) {
    CAPTURE(p.u);
    CAPTURE(p.m);
    double sn, cn, dn;
    jacobi_sn_cn_dn(p.u, p.m, sn, cn, dn);
    const auto ref = oracle::jacobi_rk4(p.u, p.m);
    CHECK(std::abs(sn - ref[0]) < 1e-11);
    CHECK(std::abs(cn - ref[1]) < 1e-11);
    CHECK(std::abs(dn - ref[2]) < 1e-11);
  }

  double sn, cn, dn;
  jacobi_sn_cn_dn(0.7, oracle::kModulus, sn, cn, dn);
  CHECK(std::abs(sn - oracle::kJac_07_mstar[0]) < 1e-14);
  CHECK(std::abs(cn - oracle::kJac_07_mstar[1]) < 1e-14);
  CHECK(std::abs(dn - oracle::kJac_07_mstar[2]) < 1e-14);
  jacobi_sn_cn_dn(2.3, -0.6, sn, cn, dn);
  CHECK(std::abs(sn - oracle::kJac_23_m06[0]) < 1e-14);
  CHECK(std::abs(cn - oracle::kJac_23_m06[1]) < 1e-14);
  CHECK(std::abs(dn - oracle::kJac_23_m06[2]) < 1e-14);
  jacobi_sn_cn_dn(-1.1, 0.35, sn, cn, dn);
  CHECK(std::abs(sn - oracle::kJac_m11_035[0]) < 1e-14);
  CHECK(std::abs(cn - oracle::kJac_m11_035[1]) < 1e-14);
  CHECK(std::abs(dn - oracle::kJac_m11_035[2]) < 1e-14);
}

TEST_CASE("jacobi identities, parity and periodicity") {
  const double m = oracle::kModulus;
  const double K = complete_elliptic_K(m);
  for (double u : {0.13, 0.9, 1.7, 2.9, -0.6, -2.2}) {
    CAPTURE(u);
    double sn, cn, dn;
    jacobi_sn_cn_dn(u, m, sn, cn, dn);
    CHECK(std::abs(sn * sn + cn * cn - 1.0) < 1e-14);
    CHECK(std::abs(dn * dn - (1.0 - m * sn * sn)) < 1e-14);
    double sn2, cn2, dn2;
    jacobi_sn_cn_dn(-u, m, sn2, cn2, dn2);
    CHECK(sn2 == doctest::Approx(-sn).epsilon(1e-13));
    CHECK(cn2 == doctest::Approx(cn).epsilon(1e-13));
    CHECK(dn2 == doctest::Approx(dn).epsilon(1e-13));
    jacobi_sn_cn_dn(u + 4.0 * K, m, sn2, cn2, dn2);
    CHECK(std::abs(sn2 - sn) < 1e-12);
    CHECK(std::abs(cn2 - cn) < 1e-12);
    jacobi_sn_cn_dn(u + 2.0 * K, m, sn2, cn2, dn2);
    CHECK(std::abs(sn2 + sn) < 1e-12);
    CHECK(std::abs(cn2 + cn) < 1e-12);
    CHECK(std::abs(dn2 - dn) < 1e-12);
  }
}

TEST_CASE("modulus equation root") {
  const double m = solve_modulus();
  CHECK(std::abs(m - oracle::kModulus) < 1e-12);
  const double res =
      6.0 * complete_elliptic_E(m) - (7.0 + m) * complete_elliptic_K(m);
  CHECK(std::abs(res) < 1e-12);
}

TEST_CASE("ground state parameter pack") {
  const auto p = ground_state_params();
  CHECK(std::abs(p.m - oracle::kModulus) < 1e-12);
  CHECK(std::abs(p.Omega - oracle::kOmega) < 1e-13);
  CHECK(std::abs(p.V - oracle::kAmplitude) < 1e-13);
  CHECK(std::abs(p.B - oracle::kB) < 1e-13);
  CHECK(std::abs(p.D - oracle::kD) < 1e-13);
  // Self-consistency of the derived quantities.
  CHECK(p.Omega ==
        doctest::Approx(2.0 * complete_elliptic_K(p.m) / oracle::kPi)
            .epsilon(1e-14));
  CHECK(p.V == doctest::Approx(std::sqrt(-2.0 * p.m) * p.Omega).epsilon(1e-14));
}
