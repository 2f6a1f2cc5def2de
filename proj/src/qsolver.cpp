#include "rwave/qsolver.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace rwave {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

void require_odd(const FourierSeries1D& h, const char* who) {
  if (h.parity != Parity::kOdd)
    throw std::invalid_argument(std::string(who) + ": input must be odd");
  double worst = 0.0;
  for (int n = 0; n <= h.N; ++n)
    worst = std::max(worst, std::abs(h.coeff(-n) + h.coeff(n)));
  if (worst > 1e-12)
    throw std::invalid_argument(std::string(who) +
                                ": coefficients violate odd parity");
}

FourierSeries1D pad(const FourierSeries1D& f, int N) {
  if (N <= f.N) return f;
  FourierSeries1D out(N, f.parity, f.reality);
  for (int n = -f.N; n <= f.N; ++n) out.set_coeff(n, f.coeff(n));
  return out;
}

FourierSeries1D truncate(const FourierSeries1D& f, int N) {
  FourierSeries1D out(N, f.parity, f.reality);
  for (int n = -N; n <= N; ++n) out.set_coeff(n, f.coeff(n));
  return out;
}

// Sine coefficient b_n of an odd real series, f = sum_{n>=1} b_n sin(n xi).
double sine_coeff(const FourierSeries1D& f, int n) {
  return -2.0 * f.coeff(n).imag();
}

double r0_direct(const GroundState& gs) {
  const auto y = apply_L(gs, gs.a0);
  const double a0La0 = multiply(gs.a0, y).coeff(0).real();
  return 1.0 + 6.0 * a0La0;
}

// Unique odd 2pi-periodic solution of p'' + 3(a0^2 + c0) p = -2 beta cd',
// solved by collocation in the sine basis. The linearized operator couples
// sine modes i and j through the cosine modes of a0^2:
//   row i of 3 a0^2 sin(j xi) picks up (3/2)(A_{|i-j|} - A_{i+j}),
// with A_q twice the real part of the full-band coefficient of a0^2.
FourierSeries1D solve_periodic_part(const GroundState& gs, double beta) {
  const int N = gs.a0.N;
  const auto a0sq = multiply(pad(gs.a0, 2 * N), pad(gs.a0, 2 * N));
  const auto rhs_series = scale(differentiate(gs.cd), Complex(-2.0 * beta, 0.0));

  auto Acos = [&](int q) {
    if (q > a0sq.N) return 0.0;
    return q == 0 ? a0sq.coeff(0).real() : 2.0 * a0sq.coeff(q).real();
  };

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
  Eigen::VectorXd rhs(N);
  for (int i = 1; i <= N; ++i) {
    for (int j = 1; j <= N; ++j) {
      double v = (i == j) ? (-static_cast<double>(i) * i + 3.0 * gs.c0 +
                             3.0 * Acos(0))
                          : 0.0;
      if (i != j) v += 1.5 * Acos(std::abs(i - j));
      v -= 1.5 * Acos(i + j);
      M(i - 1, j - 1) = v;
    }
    rhs(i - 1) = sine_coeff(rhs_series, i);
  }
  const Eigen::VectorXd b = M.partialPivLu().solve(rhs);

  FourierSeries1D p(N, Parity::kOdd, true);
  for (int n = 1; n <= N; ++n) {
    p.set_coeff(n, Complex(0.0, -0.5 * b(n - 1)));
    p.set_coeff(-n, Complex(0.0, 0.5 * b(n - 1)));
  }
  return p;
}

}  // namespace

GroundState build_ground_state(int N, double tol) {
  if (N < 16)
    throw std::invalid_argument("build_ground_state: cutoff must be >= 16");
  GroundState gs;
  gs.params = ground_state_params(tol);

  const int M = std::max(4 * N, 256);
  std::vector<double> sv(M), cdv(M);
  for (int j = 0; j < M; ++j) {
    const double xi = 2.0 * kPi * j / M;
    double sn, cn, dn;
    jacobi_sn_cn_dn(gs.params.Omega * xi, gs.params.m, sn, cn, dn);
    sv[j] = sn;
    cdv[j] = cn * dn;
  }

  // Sine transform for the odd table, cosine transform for the even one;
  // this keeps the parity structure exact by construction.
  gs.s = FourierSeries1D(N, Parity::kOdd, true);
  gs.cd = FourierSeries1D(N, Parity::kEven, true);
  for (int n = 1; n <= N; ++n) {
    double bs = 0.0, acd = 0.0;
    for (int j = 0; j < M; ++j) {
      const double xi = 2.0 * kPi * j / M;
      bs += sv[j] * std::sin(n * xi);
      acd += cdv[j] * std::cos(n * xi);
    }
    bs *= 2.0 / M;
    acd *= 2.0 / M;
    gs.s.set_coeff(n, Complex(0.0, -0.5 * bs));
    gs.s.set_coeff(-n, Complex(0.0, 0.5 * bs));
    gs.cd.set_coeff(n, Complex(0.5 * acd, 0.0));
    gs.cd.set_coeff(-n, Complex(0.5 * acd, 0.0));
  }
  double mean_cd = 0.0;
  for (int j = 0; j < M; ++j) mean_cd += cdv[j];
  gs.cd.set_coeff(0, Complex(mean_cd / M, 0.0));

  gs.a0 = scale(gs.s, Complex(gs.params.V, 0.0));
  gs.c0 = multiply(gs.a0, gs.a0).coeff(0).real();

  // Verify the profile equation a0'' + 3 c0 a0 + a0^3 = 0 with the cube
  // evaluated at full band (padded container, no intermediate loss).
  const auto a0p = pad(gs.a0, 3 * N);
  const auto cube = multiply(multiply(a0p, a0p), a0p);
  const auto dd = differentiate(differentiate(a0p));
  double worst = 0.0;
  for (int n = -3 * N; n <= 3 * N; ++n) {
    const Complex r =
        dd.coeff(n) + 3.0 * gs.c0 * a0p.coeff(n) + cube.coeff(n);
    worst = std::max(worst, std::abs(r));
  }
  if (worst > 1e-10)
    throw std::runtime_error("build_ground_state: profile residual too large");

  // Monodromy slope of the secular solution w12 = beta xi cd + p. Over one
  // period w12 gains 2 pi beta cd, and differentiating the profile family
  // in Omega at fixed mean gives beta = B (1 + 2(1+m) K'(m)/K) with
  // K'(m) = (E - (1-m)K) / (2m(1-m)).
  const double m = gs.params.m;
  const double K = complete_elliptic_K(m);
  const double E = complete_elliptic_E(m);
  const double Kdot = (E - (1.0 - m) * K) / (2.0 * m * (1.0 - m));
  gs.beta = gs.params.B * (1.0 + 2.0 * (1.0 + m) * Kdot / K);

  gs.p = solve_periodic_part(gs, gs.beta);

  // Wronskian normalization: w12(0) = 0 holds by oddness of p, and
  // w12'(0) = beta cd(0) + p'(0) = beta + sum_n n b_n(p) must equal 1.
  double pdot0 = 0.0;
  for (int n = 1; n <= N; ++n) pdot0 += n * sine_coeff(gs.p, n);
  if (std::abs(gs.beta + pdot0 - 1.0) > 1e-9)
    throw std::runtime_error(
        "build_ground_state: homogeneous-solution normalization failed");
  return gs;
}

FourierSeries1D apply_L(const GroundState& gs, const FourierSeries1D& h) {
  require_odd(h, "apply_L");
  const double beta = gs.beta;

  const int Nw = gs.s.N + h.N;
  const auto p = pad(gs.p, Nw);
  const auto cd = pad(gs.cd, Nw);
  const auto hp = pad(h, Nw);

  const auto cdh = multiply(cd, hp);
  const auto ph = multiply(p, hp);
  const Complex mean_ph = ph.coeff(0);

  auto term1 = scale(p, mean_ph / beta);
  auto term2 = multiply(p, integrate_I(cdh));
  auto term3 =
      scale(multiply(cd, integrate_I(project_P(ph))), Complex(-1.0, 0.0));
  auto term4 = scale(multiply(cd, integrate_I(integrate_I(cdh))),
                     Complex(beta, 0.0));

  auto y = add(add(term1, term2), add(term3, term4));
  auto out = truncate(y, h.N);
  out.parity = Parity::kOdd;
  return out;
}

LMatrix build_L_matrix(const GroundState& gs, int N) {
  if (N < 8)
    throw std::invalid_argument("build_L_matrix: cutoff must be >= 8");
  const double beta = gs.beta;
  const int Ns = gs.s.N;

  LMatrix L;
  L.N = N;
  L.entries.assign(static_cast<size_t>(2 * N + 1) * (2 * N + 1),
                   Complex(0.0, 0.0));
  for (int n = -N; n <= N; ++n) {
    for (int np = -N; np <= N; ++np) {
      Complex acc = gs.p.coeff(n) * gs.p.coeff(-np) / beta;
      for (int n3 = -Ns; n3 <= Ns; ++n3) {
        const int q = n3 + np;
        if (q == 0) continue;  // starred sum: the primitive has no mean mode
        const int n2 = n - np - n3;
        if (n2 < -Ns || n2 > Ns) continue;
        const Complex iq(0.0, static_cast<double>(q));
        acc += beta * gs.cd.coeff(n2) * gs.cd.coeff(n3) / (iq * iq);
        acc += gs.p.coeff(n2) * gs.cd.coeff(n3) / iq;
        acc -= gs.cd.coeff(n2) * gs.p.coeff(n3) / iq;
      }
      L.entries[static_cast<size_t>(n + N) * (2 * N + 1) +
                static_cast<size_t>(np + N)] = acc;
    }
  }
  return L;
}

double compute_r0(const GroundState& gs) {
  // Closed form through the moments of s and p over one period,
  //   <a0 L a0> = V^2 ( <p s>^2 / beta + (<p s^3> - <s^2><p s>) / Omega
  //               - beta (<s^4> - <s^2>^2) / (4 Omega^2) ),
  // with p evaluated from its elliptic closed form
  //   p = B ( (D/Omega) sn + c_e (eps(u) - (E/K) u) cn dn - c_s sn cn^2 ),
  //   eps(u) = int_0^u dn^2,
  // so this path never touches the collocation table.
  const double B = gs.params.B;
  const double D = gs.params.D;
  const double Om = gs.params.Omega;
  const double V = gs.params.V;
  const double m = gs.params.m;
  const double K = complete_elliptic_K(m);
  const double E = complete_elliptic_E(m);
  const double ce = (1.0 + m) / (m * Om * (1.0 - m));
  const double cs = (1.0 + m) / (Om * (1.0 - m));

  const int M = 4096;   // quadrature points over the period
  const int sub = 8;    // fine substeps per point for the eps integral
  const double H = 2.0 * kPi * Om / (M * sub);
  double s2 = 0.0, s4 = 0.0, ps = 0.0, ps3 = 0.0;
  double eps = 0.0;
  double sn, cn, dn;
  for (int j = 0; j < M; ++j) {
    const double u = 2.0 * kPi * Om * j / M;
    jacobi_sn_cn_dn(u, m, sn, cn, dn);
    const double pe = B * ((D / Om) * sn + ce * (eps - (E / K) * u) * cn * dn -
                           cs * sn * cn * cn);
    s2 += sn * sn;
    s4 += sn * sn * sn * sn;
    ps += pe * sn;
    ps3 += pe * sn * sn * sn;
    // Advance eps across [u, u + 2 pi Om / M] by composite Simpson.
    for (int t = 0; t < sub; t += 2) {
      double f0, f1, f2, c, d2;
      jacobi_sn_cn_dn(u + t * H, m, f0, c, d2);
      f0 = d2 * d2;
      jacobi_sn_cn_dn(u + (t + 1) * H, m, f1, c, d2);
      f1 = d2 * d2;
      jacobi_sn_cn_dn(u + (t + 2) * H, m, f2, c, d2);
      f2 = d2 * d2;
      eps += H / 3.0 * (f0 + 4.0 * f1 + f2);
    }
  }
  s2 /= M;
  s4 /= M;
  ps /= M;
  ps3 /= M;
  const double a0La0_closed =
      V * V * (ps * ps / gs.beta + (ps3 - s2 * ps) / Om -
               gs.beta * (s4 - s2 * s2) / (4.0 * Om * Om));
  const double r0_closed = 1.0 + 6.0 * a0La0_closed;

  const double r0_dir = r0_direct(gs);
  if (std::abs(r0_closed - r0_dir) > 1e-9)
    throw std::runtime_error("compute_r0: evaluation paths disagree");
  if (r0_dir <= 1.0)
    throw std::runtime_error("compute_r0: expected r0 > 1");
  return r0_dir;
}

AkResult solve_Ak(const GroundState& gs, const FourierSeries1D& f_k) {
  require_odd(f_k, "solve_Ak");
  const double r0 = r0_direct(gs);
  const auto Lf = apply_L(gs, f_k);
  const double C = multiply(gs.a0, Lf).coeff(0).real() / r0;
  const auto forcing = add(f_k, scale(gs.a0, Complex(-6.0 * C, 0.0)));
  AkResult out;
  out.A = apply_L(gs, forcing);
  out.C = C;
  return out;
}

}  // namespace rwave
