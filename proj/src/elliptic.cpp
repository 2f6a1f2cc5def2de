#include "rwave/elliptic.hpp"

#include <cmath>
#include <stdexcept>

namespace rwave {

namespace {
constexpr double kPi = 3.14159265358979323846264338327950288;
}

double complete_elliptic_K(double m, double tol) {
  if (m >= 1.0) throw std::domain_error("complete_elliptic_K: need m < 1");
  double a = 1.0;
  double b = std::sqrt(1.0 - m);
  for (int i = 0; i < 64; ++i) {
    if (std::abs(a - b) <= tol * std::abs(a)) break;
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return kPi / (2.0 * 0.5 * (a + b));
}

double complete_elliptic_E(double m, double tol) {
  if (m >= 1.0) throw std::domain_error("complete_elliptic_E: need m < 1");
  // E/K = 1 - sum_i 2^{i-1} c_i^2 with c_0^2 = m kept signed.
  double a = 1.0;
  double b = std::sqrt(1.0 - m);
  double sum = 0.5 * m;
  double pow2 = 0.5;  // 2^{i-1}
  for (int i = 1; i < 64; ++i) {
    const double c = 0.5 * (a - b);
    pow2 *= 2.0;
    sum += pow2 * c * c;
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
    if (std::abs(c) <= tol * a) break;
  }
  const double K = kPi / (2.0 * a);
  return K * (1.0 - sum);
}

void jacobi_sn_cn_dn(double u, double m, double& sn, double& cn, double& dn) {
  if (m >= 1.0) throw std::domain_error("jacobi_sn_cn_dn: need m < 1");
  if (m == 0.0) {
    sn = std::sin(u);
    cn = std::cos(u);
    dn = 1.0;
    return;
  }
  // Reduce modulo the real period 4K to keep the scaled argument small.
  const double K = complete_elliptic_K(m);
  u -= 4.0 * K * std::round(u / (4.0 * K));

  // Descending Landen: kappa_i = (1 - sqrt(1-m_i))/(1 + sqrt(1-m_i)),
  // m_{i+1} = kappa_i^2. kappa stays signed for m < 0. Quadratic descent,
  // so a handful of levels reach |m| below machine precision.
  double kappa[16];
  int depth = 0;
  double mi = m;
  while (std::abs(mi) > 1e-24 && depth < 16) {
    const double kp = std::sqrt(1.0 - mi);
    const double k = (1.0 - kp) / (1.0 + kp);
    kappa[depth++] = k;
    mi = k * k;
  }
  double v = u;
  for (int i = 0; i < depth; ++i) v /= 1.0 + kappa[i];

  double s = std::sin(v);
  double c = std::cos(v);
  double d = 1.0;
  for (int i = depth - 1; i >= 0; --i) {
    const double k = kappa[i];
    const double t = 1.0 + k * s * s;
    s = (1.0 + k) * s / t;
    c = c * d / t;
    // Positive root: dn > 0 on the real axis for every parameter m < 1.
    const double mcur = (i == 0) ? m : kappa[i - 1] * kappa[i - 1];
    d = std::sqrt(1.0 - mcur * s * s);
  }
  sn = s;
  cn = c;
  dn = d;
}

double solve_modulus(double tol) {
  const auto g = [](double m) {
    return 6.0 * complete_elliptic_E(m) - (7.0 + m) * complete_elliptic_K(m);
  };
  double lo = -0.9, hi = -0.01;
  double glo = g(lo), ghi = g(hi);
  if (!(glo > 0.0 && ghi < 0.0))
    throw std::runtime_error("solve_modulus: root not bracketed");
  double mid = lo;
  for (int i = 0; i < 200; ++i) {
    // Secant proposal, fall back to bisection when it leaves the bracket.
    double cand = (lo * ghi - hi * glo) / (ghi - glo);
    if (!(cand > lo && cand < hi)) cand = 0.5 * (lo + hi);
    const double gc = g(cand);
    mid = cand;
    if (std::abs(gc) < 1e-300 || hi - lo < tol) break;
    if (gc > 0.0) {
      lo = cand;
      glo = gc;
    } else {
      hi = cand;
      ghi = gc;
    }
    if (hi - lo < tol) {
      mid = 0.5 * (lo + hi);
      break;
    }
  }
  return mid;
}

EllipticParams ground_state_params(double tol) {
  EllipticParams p;
  p.m = solve_modulus(tol);
  const double K = complete_elliptic_K(p.m);
  p.Omega = 2.0 * K / kPi;
  p.V = std::sqrt(-2.0 * p.m) * p.Omega;
  p.B = -p.m / (1.0 - p.m);
  p.D = -1.0 / p.m;
  return p;
}

}  // namespace rwave
