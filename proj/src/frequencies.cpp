#include "rwave/frequencies.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace rwave {

double FrequencyTable::at(int m) const {
  const int a = std::abs(m);
  if (a < 1 || a > N)
    throw std::out_of_range("FrequencyTable::at: mode " + std::to_string(m) +
                            " outside [1, " + std::to_string(N) + "]");
  return omega[static_cast<size_t>(a - 1)];
}

double frequency_at(const FrequencyTable& t, int m) {
  const int a = std::abs(m);
  if (a == 0) throw std::invalid_argument("frequency_at: mode 0 has no shift");
  if (a <= t.N) return t.omega[static_cast<size_t>(a - 1)];
  return static_cast<double>(a);
}

FrequencyTable flat_frequencies(int N, double epsilon) {
  if (N < 1) throw std::invalid_argument("flat_frequencies: N must be >= 1");
  FrequencyTable t;
  t.N = N;
  t.epsilon = epsilon;
  t.generation = 0;
  t.omega.resize(static_cast<size_t>(N));
  for (int m = 1; m <= N; ++m) t.omega[static_cast<size_t>(m - 1)] = m;
  return t;
}

double frequency_deviation_constant(const FrequencyTable& t) {
  if (t.epsilon == 0.0) return 0.0;
  double worst = 0.0;
  for (int m = 1; m <= t.N; ++m)
    worst = std::max(worst, std::abs(t.at(m) - m) * m / t.epsilon);
  return worst;
}

}  // namespace rwave
