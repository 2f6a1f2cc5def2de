#include "rwave/series.hpp"

#include <cmath>
#include <stdexcept>

namespace rwave {

namespace {

Parity multiply_parity(Parity a, Parity b) {
  if (a == Parity::kNone || b == Parity::kNone) return Parity::kNone;
  if (a == b) return Parity::kEven;
  return Parity::kOdd;
}

Parity flip_parity(Parity p) {
  if (p == Parity::kOdd) return Parity::kEven;
  if (p == Parity::kEven) return Parity::kOdd;
  return Parity::kNone;
}

}  // namespace

Complex FourierSeries1D::eval(double xi) const {
  Complex acc(0.0, 0.0);
  for (int n = -N; n <= N; ++n) {
    acc += coeff(n) * std::polar(1.0, n * xi);
  }
  return acc;
}

Complex FourierSeries2D::eval(double theta, double x) const {
  Complex acc(0.0, 0.0);
  for (int n = -N; n <= N; ++n) {
    for (int m = -N; m <= N; ++m) {
      const Complex c = coeff(n, m);
      if (c == Complex(0.0, 0.0)) continue;
      acc += c * std::polar(1.0, n * theta + m * x);
    }
  }
  return acc;
}

FourierSeries1D project_P(const FourierSeries1D& f) {
  FourierSeries1D out = f;
  out.set_coeff(0, {0.0, 0.0});
  return out;
}

FourierSeries1D integrate_I(const FourierSeries1D& f) {
  if (std::abs(f.coeff(0)) > 1e-14)
    throw std::invalid_argument("integrate_I: input must have zero mean");
  FourierSeries1D out(f.N, flip_parity(f.parity), f.reality);
  for (int n = -f.N; n <= f.N; ++n) {
    if (n == 0) continue;
    out.set_coeff(n, f.coeff(n) / Complex(0.0, static_cast<double>(n)));
  }
  return out;
}

FourierSeries1D differentiate(const FourierSeries1D& f) {
  FourierSeries1D out(f.N, flip_parity(f.parity), f.reality);
  for (int n = -f.N; n <= f.N; ++n) {
    out.set_coeff(n, f.coeff(n) * Complex(0.0, static_cast<double>(n)));
  }
  return out;
}

FourierSeries1D multiply(const FourierSeries1D& f, const FourierSeries1D& g) {
  const int N = std::max(f.N, g.N);
  FourierSeries1D out(N, multiply_parity(f.parity, g.parity),
                      f.reality && g.reality);
  for (int n = -N; n <= N; ++n) {
    Complex acc(0.0, 0.0);
    const int jlo = std::max(-f.N, n - g.N);
    const int jhi = std::min(f.N, n + g.N);
    for (int j = jlo; j <= jhi; ++j) acc += f.coeff(j) * g.coeff(n - j);
    out.set_coeff(n, acc);
  }
  return out;
}

FourierSeries1D add(const FourierSeries1D& f, const FourierSeries1D& g) {
  const int N = std::max(f.N, g.N);
  const Parity p = (f.parity == g.parity) ? f.parity : Parity::kNone;
  FourierSeries1D out(N, p, f.reality && g.reality);
  for (int n = -N; n <= N; ++n) out.set_coeff(n, f.coeff(n) + g.coeff(n));
  return out;
}

FourierSeries1D scale(const FourierSeries1D& f, Complex s) {
  FourierSeries1D out = f;
  if (s.imag() != 0.0) out.reality = false;
  for (auto& c : out.coeffs) c *= s;
  return out;
}

double weighted_norm(const FourierSeries2D& u, double r) {
  if (r < 0.0) throw std::invalid_argument("weighted_norm: need r >= 0");
  double acc = 0.0;
  for (int n = -u.N; n <= u.N; ++n) {
    for (int m = -u.N; m <= u.N; ++m) {
      const double a = std::abs(u.coeff(n, m));
      if (a == 0.0) continue;
      const double term = a * std::exp(r * (std::abs(n) + std::abs(m)));
      if (!std::isfinite(term))
        throw std::overflow_error("weighted_norm: term overflow");
      acc += term;
    }
  }
  if (!std::isfinite(acc))
    throw std::overflow_error("weighted_norm: sum overflow");
  return acc;
}

DecayFit fit_decay(const FourierSeries1D& f) {
  if (f.N < 8) throw std::invalid_argument("fit_decay: cutoff must be >= 8");
  // Collect (|n|, log|c_n|) over nonzero odd harmonics n > 0.
  std::vector<std::pair<double, double>> pts;
  for (int n = 1; n <= f.N; n += 2) {
    const double a = std::abs(f.coeff(n));
    if (a > 0.0) pts.emplace_back(static_cast<double>(n), std::log(a));
  }
  if (pts.size() < 3)
    throw std::runtime_error("fit_decay: fewer than 3 usable modes");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double npts = static_cast<double>(pts.size());
  const double slope = (npts * sxy - sx * sy) / (npts * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / npts;
  return DecayFit{std::exp(intercept), -0.5 * slope};
}

FourierSeries2D symmetrize_dirichlet(const FourierSeries2D& raw) {
  // One evaluation per orbit, assigned to all four images, so the output
  // satisfies the symmetry relations exactly (not just to rounding).
  FourierSeries2D out(raw.N, true);
  for (int n = 0; n <= raw.N; ++n) {
    for (int m = 1; m <= raw.N; ++m) {
      const Complex c = 0.25 * (raw.coeff(n, m) + raw.coeff(-n, m) -
                                raw.coeff(n, -m) - raw.coeff(-n, -m));
      out.set_coeff(n, m, c);
      out.set_coeff(-n, m, c);
      out.set_coeff(n, -m, -c);
      out.set_coeff(-n, -m, -c);
    }
  }
  // m = 0 modes are odd images of themselves, hence zero.
  return out;
}

double dirichlet_defect(const FourierSeries2D& u) {
  double worst = 0.0;
  for (int n = -u.N; n <= u.N; ++n) {
    for (int m = -u.N; m <= u.N; ++m) {
      const Complex c = u.coeff(n, m);
      worst = std::max(worst, std::abs(c - u.coeff(-n, m)));
      worst = std::max(worst, std::abs(c + u.coeff(n, -m)));
    }
  }
  return worst;
}

FourierSeries2D add(const FourierSeries2D& f, const FourierSeries2D& g) {
  const int N = std::max(f.N, g.N);
  FourierSeries2D out(N, f.dirichlet_symmetry && g.dirichlet_symmetry);
  for (int n = -N; n <= N; ++n)
    for (int m = -N; m <= N; ++m)
      out.set_coeff(n, m, f.coeff(n, m) + g.coeff(n, m));
  return out;
}

FourierSeries2D scale(const FourierSeries2D& f, Complex s) {
  FourierSeries2D out = f;
  for (auto& c : out.coeffs) c *= s;
  return out;
}

}  // namespace rwave
