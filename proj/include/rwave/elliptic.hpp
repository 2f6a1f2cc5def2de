#pragma once

namespace rwave {

// Parameters of the odd 2*pi-periodic ground-state profile
//   a0(xi) = V sn(Omega xi, m),  m < 0,
// fixed by requiring that a0 solves
//   a0'' = -3<a0^2> a0 - a0^3
// with <.> the xi-average. Matching the sn ODE gives
//   V = sqrt(-2m) Omega,  Omega = 2K(m)/pi,
// and the modulus condition 6 E(m) = (7 + m) K(m).
// B and D are the constants appearing in the inverse of the
// linearized operator on odd functions: B = -m/(1-m), D = -1/m.
struct EllipticParams {
  double m = 0.0;
  double Omega = 0.0;
  double V = 0.0;
  double B = 0.0;
  double D = 0.0;
};

// Complete elliptic integrals of the first and second kind as functions
// of the parameter m (not the modulus k; m = k^2 may be negative).
// Valid for m < 1. AGM based, tol is a relative stopping threshold.
double complete_elliptic_K(double m, double tol = 1e-15);
double complete_elliptic_E(double m, double tol = 1e-15);

// Jacobi elliptic functions for real u and parameter m < 1 (m may be
// negative). Descending Landen sequence; dn is recovered as the positive
// root of dn^2 = 1 - m sn^2, which is the correct branch on the real axis.
void jacobi_sn_cn_dn(double u, double m, double& sn, double& cn, double& dn);

// Root of 6 E(m) - (7 + m) K(m) = 0 on (-1, 0), bracketed bisection/secant.
double solve_modulus(double tol = 1e-14);

EllipticParams ground_state_params(double tol = 1e-14);

}  // namespace rwave
