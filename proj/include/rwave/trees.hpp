#pragma once

#include <string>
#include <vector>

#include "rwave/frequencies.hpp"
#include "rwave/qsolver.hpp"
#include "rwave/series.hpp"

namespace rwave {

// Diagrammatic expansion of the two-frequency series. Every order of the
// recursion unfolds into a sum over labeled rooted planar trees: endpoints
// carry profile harmonics, interaction nodes carry the kernel families of
// the diagonal Green operator or a power of epsilon, counterterm vertices
// carry nu, and lines carry momenta with either polynomial or
// small-divisor propagators. The trees are the cross-check and diagnostic
// path; the recursion remains the computational path.

enum class NodeKind { kVNode, kWNode, kEndPoint };
enum class LineBadge { kV, kW };

struct Mode {
  int n = 0;
  int m = 0;
};

// Interaction node, counterterm vertex, or endpoint. Nodes of v-type carry
// two mode pairs (first = (n', m') joins the momentum of the line exiting
// the node, second = (n, m) stays below it) plus a kernel-family label
// j in {1..4}; v-type nodes with branching s = 1 carry the order k_v of the
// projection constant they insert. w-type nodes have zero modes; those with
// s = 1 are counterterm vertices and carry which of the two counterterm
// columns they couple ('a' keeps the column index, 'b' flips it).
struct TreeNode {
  int id = -1;
  NodeKind kind = NodeKind::kEndPoint;
  int s = 0;       // branching: 3 or 1 for nodes, 0 for endpoints
  int j = 0;       // kernel family, v-nodes only
  int k_v = 0;     // order label, v-nodes with s = 1
  char nu_type = 0;  // 'a' or 'b', w-nodes with s = 1
  Mode first;      // (n'_v, m'_v); endpoints store their harmonic here
  Mode second;     // (n_v, m_v)
  std::vector<int> children;  // line ids, planar (ordered) slots
};

// Line exiting `from` toward `to` (-1 above the root node). v-lines have
// |n| = |m| and polynomial propagators 1/(i n)^delta (1 when n = 0, which
// happens exactly for kernel family 1 and for endpoint lines); w-lines have
// |n| != |m| and the small-divisor propagator 1/(omega_tilde_m^2 -
// omega^2 n^2).
struct TreeLine {
  int id = -1;
  int from = -1;
  int to = -1;
  LineBadge badge = LineBadge::kV;
  int delta = 0;  // propagator power on v-lines with n != 0
  Mode momentum;
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<TreeLine> lines;
  int root_line = 0;
  int order = 0;  // #w-nodes + sum of k_v labels
};

// Everything a tree value depends on besides the labels: the profile
// tables (a0, p, cd, beta), the frequency table, the counterterms, the
// projection constants C[k] consumed by s = 1 v-nodes, and the
// normalization r0 used when the layer summer regenerates those constants.
struct TreeContext {
  const GroundState* gs = nullptr;
  FrequencyTable omega;            // renormalized frequencies
  std::vector<double> nu_a;        // counterterms, index m - 1; empty = 0
  std::vector<double> nu_b;
  double epsilon = 0.0;
  std::vector<double> C;           // projection constants per order
  double r0 = 0.0;                 // 1 + 6 <a0 L a0>
  double divisor_floor = 1e-12;
};

struct EnumOptions {
  long long max_trees = 2'000'000;        // emitted-tree budget
  long long max_iterations = 400'000'000; // label-odometer budget
  int momentum_cutoff = 0;  // when > 0, clip w-line momenta and v-node
                            // entering totals to the stored-layer grid
  bool odd_labels_only = true;  // the profile tables have purely odd
                                // support; even labels give zero trees
};

// All unequivalent labeled trees of the given order whose root line
// carries momentum (n, m): the diagonal series component when |n| = |m|,
// the off-diagonal one otherwise. Mode labels range over
// |label| <= mode_cutoff. Orders 1..3 and cutoffs 1..8 only; beyond that
// the enumeration is not exhaustively affordable and the recursion is the
// computational path. Throws on budget overrun.
std::vector<Tree> enumerate_trees(int k, int n, int m, int mode_cutoff,
                                  const EnumOptions& opt = {});

// Label-free skeletons (kinds, branchings, k_v splits, planar slots) of
// the given order, split by the badge of the root line. Counting bounds
// and branching identities depend only on these.
struct ShapeCensus {
  std::vector<Tree> v_rooted;  // diagonal component
  std::vector<Tree> w_rooted;  // off-diagonal component
};
ShapeCensus enumerate_shapes(int k);

// One summand of the dense diagonal kernel, indexed by family j in 1..4;
// the propagator of the exiting line is not included. a is the first
// (outgoing-side) mode label, b the second.
Complex kernel_family_factor(const GroundState& gs, int j, int a, int b);

// Product of propagators, node factors, and endpoint factors. Throws when
// a w-line divisor falls below ctx.divisor_floor.
Complex tree_value(const Tree& t, const TreeContext& ctx);

// Order-by-order sum of all tree values, with the branch sums factorized
// per family instead of enumerated label by label (the two agree exactly;
// the exhaustive path is affordable only at tiny cutoffs). layers[k]
// collects the full 2D coefficient layer of order k on |n|, |m| <= grid_n;
// C[k] is regenerated from the diagonal trees with s = 3 at the root and
// consumed by the s = 1 nodes of later orders. Matches the recursion's
// truncation: w-entries and diagonal forcing indices are clipped to the
// grid, intermediate products are carried wide enough to be exact.
struct TreeSumResult {
  std::vector<FourierSeries2D> layers;
  std::vector<double> C;
};
TreeSumResult tree_expansion_layers(int K, const TreeContext& ctx,
                                    int grid_n);

// Node/edge-count inequalities: #v3 <= 2 #w3 + 2 #v1 and
// #endpoints <= 2 (#v3 + #w3) + 1.
bool check_counting_bounds(const Tree& t);

// sum over nodes of (s_v - 1) equals #endpoints - 1.
bool check_branching_identity(const Tree& t);

// Recomputes every line momentum from the mode labels (counterterm
// vertices of type 'b' flip the column index across the vertex) and
// compares with the stored values.
bool check_momentum_law(const Tree& t);

// Sum of |n| over all mode labels: endpoints contribute |n'|, v-nodes
// |n'_v| + |n_v|, w-nodes nothing. Controls which scales a tree can reach.
int mode_label_sum(const Tree& t);

// Canonical preorder serialization; two trees are equivalent iff their
// encodings match. Used for deduplication and determinism checks.
std::string canonical_encoding(const Tree& t);

// Smooth bump: 1 on |x| <= C0, 0 on |x| >= 2 C0, exp(-1/t)-glued between.
double chi_bump(double x, double C0);

// Scale-h member of the partition of unity built from the bump:
// h = -1 gives 1 - chi(x), h >= 0 gives chi(2^h x) - chi(2^{h+1} x), so
// chi_h is supported on 2^{-h-1} C0 <= |x| <= 2^{-h+1} C0 and the sum over
// h >= -1 telescopes to 1 away from x = 0. Requires 0 < C0 <= 1/2.
double chi_partition(double x, int h, double C0);

// A cluster is a maximal set of nodes connected through lines of scale
// <= h_T (h_T = largest internal line scale; at least one internal line).
// External lines then necessarily carry higher scales. A cluster with
// exactly one entering line whose momentum matches the exiting line up to
// the sign of m is a self-energy subgraph; type 'a' keeps m, type 'b'
// flips it.
struct Cluster {
  std::vector<int> nodes;
  std::vector<int> lines;     // internal
  std::vector<int> external;  // one outgoing + all incoming
  int h_T = -1;
  int k_T = 0;                // #w-nodes + sum k_v inside
  int h_ext = -1;             // minimum external-line scale
  bool is_self_energy = false;
  char resonance_type = 0;    // 'a' or 'b'
  int n_T = 0;                // mode-label sums over the cluster
  int m_T = 0;
};

struct ScaledTree {
  Tree base;
  std::vector<int> scales;     // per line id, >= -1
  double chi_weight = 1.0;     // product of chi_{h_l}(x_l) over w-lines
  std::vector<Cluster> clusters;
};

// All scale assignments with a nonzero partition weight: w-lines range
// over the (at most two) scales whose bump is nonzero at
// x = |omega n_l| - omega_tilde_m, v-lines and endpoint lines sit at -1.
// The weights over all assignments sum to 1, so the weighted values
// telescope back to the plain tree value.
std::vector<ScaledTree> assign_scales(const Tree& t, const TreeContext& ctx,
                                      double C0);

// Fills the laminar cluster family and the self-energy flags.
ScaledTree find_clusters_and_resonances(ScaledTree st);

// Per-scale census: lines at scale h, clusters of scale h, self-energy
// subgraphs whose smaller external scale is h, and counterterm vertices
// whose larger line scale is h.
struct ScaleCounts {
  int N_h = 0;
  int C_h = 0;
  int S_h = 0;
  int M_h = 0;
};
ScaleCounts count_scales(const ScaledTree& st, int h);

// Number of structurally distinct self-energy subgraph configurations of
// the given order (entering-line slot and kernel-node placement count as
// distinct planar arrangements).
int self_energy_census(int k_T);

// Graphviz rendering (nodes labeled with kind/modes, lines with
// badge/momentum and scale when present).
std::string to_dot(const Tree& t);
std::string to_dot(const ScaledTree& st);

// JSON listing for fixtures: order, root line, nodes, lines.
std::string trees_to_json(const std::vector<Tree>& ts);

}  // namespace rwave
