#pragma once

#include <vector>

namespace rwave {

// Renormalized frequencies omega_t(m) for 1 <= |m| <= N. Even in m by
// construction (only |m| is stored), all entries positive.
struct FrequencyTable {
  int N = 0;
  std::vector<double> omega;  // omega[|m| - 1]
  double epsilon = 0.0;
  int generation = 0;

  double at(int m) const;  // throws if m == 0 or |m| > N
};

// Table lookup extended flat beyond the cutoff: omega_t(m) = |m| for
// |m| > N. Throws only at m = 0.
double frequency_at(const FrequencyTable& t, int m);

// The unrenormalized table omega_t(m) = |m| (starting point of the
// frequency iteration, and the table used by diagnostics).
FrequencyTable flat_frequencies(int N, double epsilon);

// Checks |omega_t(m) - |m|| <= C eps / |m| for every stored mode; returns
// the smallest admissible C (0 when eps = 0 and the table is flat).
double frequency_deviation_constant(const FrequencyTable& t);

}  // namespace rwave
