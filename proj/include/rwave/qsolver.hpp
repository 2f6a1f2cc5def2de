#pragma once

#include <vector>

#include "rwave/elliptic.hpp"
#include "rwave/series.hpp"

namespace rwave {

// The unperturbed diagonal profile and its companions:
//   s(xi)  = sn(Omega xi, m)          (odd)
//   cd(xi) = cn(Omega xi, m) dn(...)  (even, = s'/Omega)
//   a0     = V s
//   c0     = <a0^2>
// The homogeneous linearized equation y'' + 3(a0^2 + c0) y = 0 has the
// periodic solution cd and a second, secular solution
//   w12(xi) = beta xi cd(xi) + p(xi),
// where beta is the monodromy slope (closed form below) and p is the
// unique odd 2pi-periodic function with p'' + 3(a0^2+c0) p = -2 beta cd'.
// Both beta and the table of p are produced at construction time.
struct GroundState {
  EllipticParams params;
  FourierSeries1D a0;
  FourierSeries1D s;
  FourierSeries1D cd;
  FourierSeries1D p;
  double c0 = 0.0;
  double beta = 0.0;
};

// Samples the elliptic functions on a uniform grid of >= 4N points and
// assembles the coefficient tables; verifies the profile equation
//   a0'' + 3 <a0^2> a0 + a0^3 = 0
// to 1e-10 in max coefficient norm, computes beta = B(1 + 2(1+m)K'(m)/K)
// and the periodic table p, and checks the Wronskian normalization
// beta + p'(0) = 1 before returning.
GroundState build_ground_state(int N, double tol = 1e-14);

// Green operator of the linearized profile equation on odd functions:
//   y'' + 3 (a0^2 + c0) y = h,
//   y = beta^{-1} p <p h> + p I[cd h] - cd I[P[p h]] + beta cd I[I[cd h]],
// assembled by variation of constants from the solution pair (cd, w12).
// Intermediates are carried at an extended cutoff so every retained output
// mode is an exact convolution sum.
FourierSeries1D apply_L(const GroundState& gs, const FourierSeries1D& h);

// Dense kernel with (L h)_n = sum_{n'} L(n, n') h_{n'} for |n|, |n'| <= N.
struct LMatrix {
  int N = 0;
  std::vector<Complex> entries;  // (n + N) * (2N + 1) + (n' + N)
  Complex at(int n, int np) const {
    return entries[static_cast<size_t>(n + N) * (2 * N + 1) +
                   static_cast<size_t>(np + N)];
  }
};
LMatrix build_L_matrix(const GroundState& gs, int N);

// r0 = 1 + 6 <a0 L[a0]>, evaluated through the closed form in the moments
// of s and p (quadrature over one period, with p in its elliptic closed
// form) and compositionally through apply_L; the two must agree to 1e-9
// or the call throws.
double compute_r0(const GroundState& gs);

// Solves the projected diagonal equation at one order: given the forcing
// f_k, returns C_k = r0^{-1} <a0 L[f_k]> and A_k = L[f_k - 6 C_k a0],
// which satisfies <a0 A_k> = C_k by construction of r0.
struct AkResult {
  FourierSeries1D A;
  double C = 0.0;
};
AkResult solve_Ak(const GroundState& gs, const FourierSeries1D& f_k);

}  // namespace rwave
