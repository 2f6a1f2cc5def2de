#include "rwave/parallel.hpp"

#ifdef RWAVE_HAVE_OPENMP
#include <omp.h>
#endif

#include <algorithm>

namespace rwave {

namespace {

// One output row n: acc_{m} = sum over admissible (n1, m1).
void conv_row(const FourierSeries2D& a, const FourierSeries2D& b, int n,
              FourierSeries2D& out) {
  const int n1lo = std::max(-a.N, n - b.N);
  const int n1hi = std::min(a.N, n + b.N);
  for (int m = -out.N; m <= out.N; ++m) {
    Complex acc(0.0, 0.0);
    const int m1lo = std::max(-a.N, m - b.N);
    const int m1hi = std::min(a.N, m + b.N);
    for (int n1 = n1lo; n1 <= n1hi; ++n1) {
      for (int m1 = m1lo; m1 <= m1hi; ++m1) {
        const Complex ca = a.coeff(n1, m1);
        if (ca == Complex(0.0, 0.0)) continue;
        acc += ca * b.coeff(n - n1, m - m1);
      }
    }
    out.set_coeff(n, m, acc);
  }
}

}  // namespace

FourierSeries2D conv2d_serial(const FourierSeries2D& a,
                              const FourierSeries2D& b, int n_out) {
  // A product of two odd-in-x factors is even in x, so the flag drops.
  FourierSeries2D out(n_out, false);
  for (int n = -n_out; n <= n_out; ++n) conv_row(a, b, n, out);
  return out;
}

FourierSeries2D conv2d_parallel(const FourierSeries2D& a,
                                const FourierSeries2D& b, int n_out) {
  FourierSeries2D out(n_out, false);
#ifdef RWAVE_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
  for (int n = -n_out; n <= n_out; ++n) conv_row(a, b, n, out);
#else
  for (int n = -n_out; n <= n_out; ++n) conv_row(a, b, n, out);
#endif
  return out;
}

FourierSeries2D conv2d(const FourierSeries2D& a, const FourierSeries2D& b,
                       int n_out) {
#ifdef RWAVE_HAVE_OPENMP
  return conv2d_parallel(a, b, n_out);
#else
  return conv2d_serial(a, b, n_out);
#endif
}

int hardware_threads() {
#ifdef RWAVE_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_thread_count(int n) {
#ifdef RWAVE_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace rwave
