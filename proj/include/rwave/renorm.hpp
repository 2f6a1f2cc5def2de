#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rwave/frequencies.hpp"
#include "rwave/lindstedt.hpp"
#include "rwave/qsolver.hpp"
#include "rwave/series.hpp"

namespace rwave {

// Scale-indexed counterterm split. nu[t][h + 1][|m| - 1] stores
// nu^{(c)}_{h,m} for c = 'a' (t = 0) and 'b' (t = 1), h in [-1, h_max],
// 1 <= |m| <= N. The two types are even in m; modes beyond N reuse the
// |m| = N value (the tables decay in m, so the flat tail is a
// second-order effect); scales beyond h_max extend by the zero boundary
// value. gamma is the strength of the diagonal projection insertion
// determined together with the table.
struct CountertermTable {
  int h_max = 12;
  int N = 0;
  double epsilon = 0.0;
  double gamma = 0.0;
  int K_se = 2;
  int generations = 0;      // fixed-point sweeps actually run
  double last_change = 0.0; // sup-change of the final sweep
  std::vector<std::vector<std::vector<double>>> nu;

  double at(char type, int h, int m) const;
  std::string to_json() const;
};

CountertermTable zero_counterterms(int h_max, int N, double epsilon,
                                   int K_se);

// Inputs of the scale analysis: ground state, renormalized frequencies,
// and the truncation knobs. The subgraph sums keep their own label
// cutoff (se_mode_cutoff), independent of the expansion cutoff N; both
// are declared truncation parameters.
struct RenormContext {
  const GroundState* gs = nullptr;
  FrequencyTable omega;
  double epsilon = 0.0;
  double gamma = 0.0;
  int N = 16;
  int K_se = 2;             // largest subgraph order entering the flow
  int se_mode_cutoff = 5;   // label cutoff inside subgraph sums
  int K_gamma = 2;          // orders kept in the projection update
  double C0 = 0.25;         // bump half-width of the scale partition
  int h_max = 12;
  double divisor_floor = 1e-12;
  // Collapse the flow to a single m-independent value, localizing only
  // subgraphs whose external lines attach to the same node.
  bool single_counterterm = false;
};

// Sentinel scales. kScaleSummed on an internal line means the partition
// of unity is summed there (no bucketing); kScaleFar on the external
// lines means they sit above every internal scale.
inline constexpr int kScaleSummed = -1000;
inline constexpr int kScaleFar = 1000;

// Side object hanging off the chain between the two external lines, at
// most order one each (all that k_T <= 2 admits):
//   'e'  endpoint,
//   'w'  order-1 off-diagonal subtree (cubic node over three endpoints),
//   'g'  projection insertion over one endpoint (carries gamma),
//   'x'  diagonal cubic over an order-1 off-diagonal subtree and one
//        endpoint.
// h fixes the scale of the w-line inside/atop the side ('w': its root
// line, 'x': the line under its cubic node); kScaleSummed sums it.
struct SelfEnergySide {
  char kind = 'e';
  int h = kScaleSummed;
};

// One node of the chain. 'w' and 'v' are the cubic kinds (two sides
// each); 'n' is a counterterm vertex (no sides). h is the scale of the
// node's exiting line when that line is internal; the topmost node exits
// through the outgoing external line and ignores h.
struct SelfEnergyNode {
  char kind = 'w';
  char nu_type = 'a';
  int h = kScaleSummed;
  SelfEnergySide side[2];
};

// A self-energy subgraph at family granularity: the chain from the
// entering line to the exiting one with its side objects, mode labels
// summed at evaluation time. type restricts the summed m-labels to 0
// ('a') or -2m ('b'); multiplicity counts the planar arrangements that
// share this value (slot choices do not change it). k_T = #cubic
// w-nodes + #counterterm vertices + side orders.
struct SelfEnergyGraph {
  char type = 'a';
  int k_T = 1;
  int multiplicity = 1;
  int ext_scale = kScaleFar;
  std::vector<SelfEnergyNode> path;

  int h_T() const;  // largest fixed internal scale, -1 when none
};

// All chain structures of order <= k_max (1 or 2), with .type stamped on
// each copy. Structures do not depend on the type; the census weighted
// by multiplicity matches self_energy_census at order 1.
std::vector<SelfEnergyGraph> list_self_energy_graphs(int k_max, char type);

// Scales h >= -1 whose partition member is nonzero at the argument,
// with the member's value; at most two, empty only at arg = 0.
std::vector<std::pair<int, double>> scale_candidates(double arg, double C0,
                                                     int h_cap);

// Value of the subgraph as a function of the external argument x, with
// the entering line at momentum (x / omega, m). Internal propagators and
// bumps are taken at their assigned scales; summed slots telescope over
// the partition of unity. The table supplies counterterm-vertex factors
// and may be omitted for graphs without them.
double self_energy_value(const SelfEnergyGraph& T, double x, int m,
                         const RenormContext& ctx,
                         const CountertermTable* table = nullptr);

// Difference form of the regularized value: V(x) - V(sgn(x) wt_m).
double regularize(const SelfEnergyGraph& T, double x, int m,
                  const RenormContext& ctx,
                  const CountertermTable* table = nullptr);

// Integral form: (x - sgn(x) wt_m) * int_0^1 V'(...) dt by 5-point Gauss
// quadrature with centered-difference derivatives; agrees with the
// difference form to quadrature accuracy.
double regularize_by_quadrature(const SelfEnergyGraph& T, double x, int m,
                                const RenormContext& ctx,
                                const CountertermTable* table = nullptr);

// Scale-h component of the flow driving term for mode m, types (a, b):
//   beta^{(c)}_{h,m} = 2^{h+1} * (1/2) sum_{sgn} sum_{T on scale h}
//                      V_T^{h+1}(sgn * wt_m, m),
// the inner sum running over subgraphs of order <= table.K_se whose
// largest internal scale is h. Counterterm vertices inside the sum read
// the given table.
std::pair<double, double> beta_function(int h, int m,
                                        const CountertermTable& table,
                                        const RenormContext& ctx);

// Counterterm fixed point: starting from the zero table, each sweep
// rebuilds the driving terms at the previous table and resums them
// downward from the zero boundary at h_max,
//   nu_{h,m} = -2^{h+1} sum_{k=h}^{h_max-1} 2^{-k-2} beta_{k,m},
// for h in [-1, h_max - 1], until the sup-change falls below tol or
// q_max sweeps. The physical countertem is the h = -1 row. Throws a
// non-contraction error when the sup-change grows three sweeps in a row.
CountertermTable nu_fixed_point(const RenormContext& ctx, int h_max,
                                int q_max, double tol);

// Strength of the diagonal projection insertion, determined by the
// self-consistence iteration: each iterate re-runs the counterterm fixed
// point at the previous gamma, rebuilds the resummed layers, and updates
//   gamma = sum_{k <= K_gamma} r0^{-1} <a0 L f^(k)>.
double gamma_fixed_point(const RenormContext& ctx, double tol);

// sup over (h, m, type) of |nu(gamma1) - nu(gamma2)| / |gamma1 - gamma2|
// across two converged tables; Lipschitz in gamma with constant O(eps).
double nu_gamma_sensitivity(const RenormContext& ctx, double gamma1,
                            double gamma2);

// Layered expansion with the diagonal projection fixed at gamma: the
// off-diagonal recursion is unchanged (counterterms from the table's
// h = -1 row), while the diagonal layer at order k is L[f^(k)], plus
// -6 gamma L[a0] at k = 1 where the insertion lives. C_tilde[k] records
// the raw projection coefficient r0^{-1} <a0 L f^(k)> of each order.
struct ResummedExpansion {
  ExpansionState state;
  std::vector<double> C_tilde;  // index k, C_tilde[0] = 0
};
ResummedExpansion resummed_layers(const RenormContext& ctx,
                                  const CountertermTable& table, int K);

// Consistency bridge: converges gamma and the table, sums the layers at
// two truncation orders, and reports the equation residuals together
// with the recombination defect of the counterterm insertion (partition
// of unity at the stored momenta, weighted by the insertion row).
struct ResummationReport {
  double epsilon = 0.0;
  double gamma = 0.0;
  int K_lo = 2;
  int K_hi = 3;
  double residual_lo = 0.0;
  double residual_hi = 0.0;
  bool residual_decreasing = false;
  double insertion_defect = 0.0;

  struct ModeDefect {
    int n = 0;
    int m = 0;
    double residual = 0.0;
    double insertion = 0.0;
  };
  std::vector<ModeDefect> modes;

  std::string to_json() const;
};
ResummationReport verify_resummed_solution(const RenormContext& ctx);

}  // namespace rwave
