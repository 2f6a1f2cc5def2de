#pragma once

#include <complex>
#include <utility>
#include <vector>

namespace rwave {

using Complex = std::complex<double>;

enum class Parity { kNone, kEven, kOdd };

// Truncated Fourier series f(xi) = sum_{|n| <= N} c_n e^{i n xi}.
// Stored densely on [-N, N]. The parity and reality flags describe the
// function; operations propagate them and tests enforce them.
struct FourierSeries1D {
  int N = 0;
  std::vector<Complex> coeffs;  // index n + N
  Parity parity = Parity::kNone;
  bool reality = true;

  FourierSeries1D() = default;
  explicit FourierSeries1D(int cutoff, Parity p = Parity::kNone,
                           bool real_valued = true)
      : N(cutoff), coeffs(2 * cutoff + 1, Complex(0.0, 0.0)), parity(p),
        reality(real_valued) {}

  Complex coeff(int n) const {
    if (n < -N || n > N) return {0.0, 0.0};
    return coeffs[static_cast<size_t>(n + N)];
  }
  void set_coeff(int n, Complex c) { coeffs[static_cast<size_t>(n + N)] = c; }
  Complex mean() const { return coeff(0); }
  Complex eval(double xi) const;
};

// Truncated double series u = sum_{|n|,|m| <= N} u_{n,m} e^{i(n theta + m x)}.
// dirichlet_symmetry means u_{n,m} = u_{-n,m} = -u_{n,-m}; together with
// reality (u_{-n,-m} = conj u_{n,m}) the coefficients are purely imaginary.
struct FourierSeries2D {
  int N = 0;
  std::vector<Complex> coeffs;  // index (n + N) * (2N + 1) + (m + N)
  bool dirichlet_symmetry = true;

  FourierSeries2D() = default;
  explicit FourierSeries2D(int cutoff, bool dirichlet = true)
      : N(cutoff),
        coeffs(static_cast<size_t>(2 * cutoff + 1) * (2 * cutoff + 1),
               Complex(0.0, 0.0)),
        dirichlet_symmetry(dirichlet) {}

  size_t idx(int n, int m) const {
    return static_cast<size_t>(n + N) * (2 * N + 1) +
           static_cast<size_t>(m + N);
  }
  Complex coeff(int n, int m) const {
    if (n < -N || n > N || m < -N || m > N) return {0.0, 0.0};
    return coeffs[idx(n, m)];
  }
  void set_coeff(int n, int m, Complex c) { coeffs[idx(n, m)] = c; }
  void add_coeff(int n, int m, Complex c) { coeffs[idx(n, m)] += c; }
  Complex eval(double theta, double x) const;
};

// P[F] = F - <F>: zeroes the mean mode.
FourierSeries1D project_P(const FourierSeries1D& f);

// I[F]: the zero-mean primitive, c_n -> c_n/(i n); requires <F> = 0.
// Swaps odd and even parity.
FourierSeries1D integrate_I(const FourierSeries1D& f);

// d/dxi, c_n -> i n c_n. Inverse of integrate_I on zero-mean input.
FourierSeries1D differentiate(const FourierSeries1D& f);

// Exact coefficient-space convolution truncated to max(N_f, N_g).
FourierSeries1D multiply(const FourierSeries1D& f, const FourierSeries1D& g);

FourierSeries1D add(const FourierSeries1D& f, const FourierSeries1D& g);
FourierSeries1D scale(const FourierSeries1D& f, Complex s);

// sum |u_{n,m}| e^{r(|n| + |m|)} over all stored modes (symmetry images
// included). Throws on overflow.
double weighted_norm(const FourierSeries2D& u, double r);

struct DecayFit {
  double alpha = 0.0;
  double kappa = 0.0;
};

// Least-squares fit log|c_n| = log(alpha) - 2 kappa |n| over the nonzero
// odd harmonics. Throws if fewer than 3 usable modes.
DecayFit fit_decay(const FourierSeries1D& f);

// Projection onto the symmetry class u_{n,m} = u_{-n,m} = -u_{n,-m}.
FourierSeries2D symmetrize_dirichlet(const FourierSeries2D& raw);

// Largest violation of the symmetry relations (0 for a clean container).
double dirichlet_defect(const FourierSeries2D& u);

FourierSeries2D add(const FourierSeries2D& f, const FourierSeries2D& g);
FourierSeries2D scale(const FourierSeries2D& f, Complex s);

}  // namespace rwave
