#pragma once

#include <string>
#include <vector>

#include "rwave/frequencies.hpp"
#include "rwave/qsolver.hpp"
#include "rwave/series.hpp"

namespace rwave {

// Configuration of the coupling expansion u = sum_k mu^k u^(k).
struct ExpansionConfig {
  int K = 1;             // highest order to compute
  int N = 16;            // stored cutoff per Fourier index
  double epsilon = 0.0;  // >= 0
  int j = 1;             // harmonic family: solution supported on (jn, jm)
  // Odd-nonlinearity coefficients: phi[k-1] multiplies u^{2k+1}. The
  // leading (cubic) coefficient must be positive; internally the list is
  // normalized so the cubic coefficient is 1 (phi_hat_k = phi_k / phi_1^k),
  // which leaves the expansion invariant.
  std::vector<double> phi = {1.0};
  double mu = 1.0;               // default evaluation point
  double divisor_floor = 1e-12;  // abort threshold for |-(1-eps)n^2 + wt_m^2|
  // Guard on the convolution work of a single order (coefficient pairs).
  long long term_budget = 400000000LL;
};

// Expansion state. For j > 1 the recursion runs on the fundamental
// lattice at cutoff N/j with the derived tables below (frequencies
// omega_t(jm)/j, counterterms nu/(j^2), coefficients phi_hat_k j^{2(k-1)});
// layer k of the physical family is j times the fundamental layer placed
// on the j-sublattice (see physical_layer).
struct ExpansionState {
  ExpansionConfig config;
  GroundState gs;            // ground state at the fundamental cutoff
  FrequencyTable omega_t;    // physical table, modes 1..N
  std::vector<double> nu_a;  // physical counterterm split, index |m| - 1
  std::vector<double> nu_b;

  int sub_N = 0;                   // fundamental cutoff (= N when j = 1)
  std::vector<double> phi_hat;     // cubic-normalized, physical equation
  std::vector<double> phi_hat_sub; // with the j^{2(k-1)} sublattice factor
  std::vector<double> sub_omega;   // fundamental frequencies, index m - 1
  std::vector<double> sub_nu_a;
  std::vector<double> sub_nu_b;

  std::vector<FourierSeries2D> orders;  // u^(k) on the fundamental lattice
  std::vector<FourierSeries1D> A;       // diagonal profiles; A[0] = a0
  std::vector<double> C;                // C[0] = 0
};

// Builds the order-0 state: diagonal layers u_{n,+-n} = +-a_{0,n}, empty
// counterterm orders. nu_a / nu_b must be empty (treated as zero) or hold
// one value per mode 1..N. Throws on invalid configuration.
ExpansionState init_expansion(const ExpansionConfig& cfg,
                              const FrequencyTable& omega_t,
                              const std::vector<double>& nu_a = {},
                              const std::vector<double>& nu_b = {});

// Off-diagonal layer at order k >= 1 from layers < k:
//   w^(k)_{n,m} = [nu_a(m) w^(k-1)_{n,m} + nu_b(m) w^(k-1)_{n,-m}
//                  + eps * (nonlinearity)^(k-1)_{n,m}] / (-(1-eps)n^2 + wt_m^2)
// on |n| != |m|; entries with m = 0 vanish by symmetry. Throws a
// small-divisor error naming (n, m) when a divisor falls below the floor,
// and a missing-order error when layers < k are absent.
FourierSeries2D w_k(const ExpansionState& st, int k);

// Diagonal forcing at order k: the (n, n) components of the order-k
// nonlinearity, where an order-k factor is admitted only through its
// off-diagonal part (the diagonal unknown of the same order is handled by
// the Green-operator solve). Uses the stored order-k layer's off-diagonal
// part when present, otherwise computes it via w_k.
FourierSeries1D f_k(const ExpansionState& st, int k);

// Computes w^(k), f^(k), (A^(k), C^(k)) and installs the complete order-k
// layer. k must equal the number of computed orders.
void advance_order(ExpansionState& st, int k);

// Layer k on the physical lattice (identity for j = 1).
FourierSeries2D physical_layer(const ExpansionState& st, int k);

struct EvalResult {
  FourierSeries2D u;       // sum of mu^k layers, physical lattice
  double q_defect = 0.0;   // max |n^2 a_n - [nonlinearity]_{n,+-n}|
  double p_defect = 0.0;   // max off-diagonal row defect
  double residual = 0.0;   // max of the two
};

// Sums mu^k u^(k) over the computed orders and measures the coefficient
// defects of the diagonal and off-diagonal equations on the stored grid.
// The mu-grading of terms beyond the cubic makes the partial sums exact
// order by order only at mu = 1; away from mu = 1 the defect is a
// diagnostic, exact for cubic-only runs.
EvalResult evaluate_and_residual(const ExpansionState& st, double mu);

struct GrowthRow {
  int k = 0;
  double max_abs = 0.0;  // max coefficient magnitude of u^(k)
  double ratio = 0.0;    // max_abs / previous max_abs (0 for k = 0)
  bool divisor_hit = false;
};

// Per-order magnitude table with nu = 0 and omega_t(m) = |m|, for
// inspecting growth of the unrenormalized expansion. A small-divisor
// abort marks the offending order and stops the table there.
std::vector<GrowthRow> growth_diagnostic(const ExpansionConfig& cfg);

std::string growth_csv(const std::vector<GrowthRow>& rows);

// Full state as JSON: config, tables, C list, A and u^(k) coefficient
// tables (physical lattice).
std::string expansion_to_json(const ExpansionState& st);

}  // namespace rwave
