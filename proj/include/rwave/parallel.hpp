#pragma once

#include "rwave/series.hpp"

namespace rwave {

// Exact 2D coefficient convolution (a * b)_{n,m} truncated to |n|,|m| <=
// n_out. No intermediate truncation: every source pair with n1+n2 = n,
// m1+m2 = m contributes. The OpenMP variant parallelizes over output rows
// with the same inner summation order, so both produce identical results.
FourierSeries2D conv2d_serial(const FourierSeries2D& a,
                              const FourierSeries2D& b, int n_out);
FourierSeries2D conv2d_parallel(const FourierSeries2D& a,
                                const FourierSeries2D& b, int n_out);

// Dispatches to the parallel kernel when built with OpenMP.
FourierSeries2D conv2d(const FourierSeries2D& a, const FourierSeries2D& b,
                       int n_out);

int hardware_threads();
void set_thread_count(int n);  // 0 = library default

}  // namespace rwave
