#include "rwave/renorm.hpp"

#ifdef RWAVE_HAVE_OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "rwave/parallel.hpp"
#include "rwave/trees.hpp"

namespace rwave {

namespace {

int type_index(char c) {
  if (c == 'a') return 0;
  if (c == 'b') return 1;
  throw std::invalid_argument("counterterm type must be 'a' or 'b'");
}

void validate_context(const RenormContext& ctx) {
  if (ctx.gs == nullptr)
    throw std::invalid_argument("renorm: ground state missing");
  if (!(ctx.epsilon >= 0.0) || !(ctx.epsilon < 1.0))
    throw std::invalid_argument("renorm: epsilon must lie in [0, 1)");
  if (ctx.N < 1) throw std::invalid_argument("renorm: N must be >= 1");
  if (!(ctx.C0 > 0.0) || ctx.C0 > 0.5)
    throw std::invalid_argument("renorm: C0 must lie in (0, 1/2]");
  if (ctx.h_max < 0)
    throw std::invalid_argument("renorm: h_max must be >= 0");
  if (ctx.se_mode_cutoff < 1)
    throw std::invalid_argument("renorm: label cutoff must be >= 1");
  if (ctx.K_se < 1 || ctx.K_se > 2)
    throw std::invalid_argument(
        "renorm: the subgraph chain catalogue stops at order 2");
  if (ctx.K_gamma < 1)
    throw std::invalid_argument("renorm: K_gamma must be >= 1");
}

int side_order(char kind) { return kind == 'e' ? 0 : 1; }

// ---------------------------------------------------------------------
// Side tables: the order <= 1 objects hanging off the chain, flattened
// to (delivered momentum, value, scale of the w-line they contain).
// Values fold in every node factor, endpoint factor, propagator, and
// bump weight of the side, so the chain evaluator only multiplies.

struct SideEntry {
  int dn = 0;
  int dm = 0;
  Complex val{0.0, 0.0};
  int h = -1;
};

struct SideTables {
  std::vector<SideEntry> e, w, g, x;

  const std::vector<SideEntry>& of(char kind) const {
    switch (kind) {
      case 'e':
        return e;
      case 'w':
        return w;
      case 'g':
        return g;
      case 'x':
        return x;
      default:
        throw std::invalid_argument("unknown side kind");
    }
  }
};

SideTables build_side_tables(const RenormContext& ctx, double gamma) {
  const GroundState& gs = *ctx.gs;
  const int cut = ctx.se_mode_cutoff;
  const int grid = 3 * cut;
  const double omega = std::sqrt(1.0 - ctx.epsilon);
  const double omsq = 1.0 - ctx.epsilon;
  SideTables t;

  for (int l = 1; l <= cut; l += 2) {
    for (int sn = -1; sn <= 1; sn += 2) {
      for (int sm = -1; sm <= 1; sm += 2) {
        const int dn = sn * l;
        const int dm = sm * l;
        const Complex a = gs.a0.coeff(dm);
        if (a == Complex(0.0, 0.0)) continue;
        t.e.push_back({dn, dm, a, -1});
      }
    }
  }

  // Order-1 off-diagonal subtree: one cubic node over three endpoints.
  FourierSeries2D u0(grid);
  for (int n = 1; n <= std::min(cut, gs.a0.N); ++n) {
    const Complex c = gs.a0.coeff(n);
    u0.set_coeff(n, n, c);
    u0.set_coeff(-n, n, c);
    u0.set_coeff(n, -n, -c);
    u0.set_coeff(-n, -n, -c);
  }
  const FourierSeries2D pair = conv2d(u0, u0, 2 * grid);
  const FourierSeries2D cube = conv2d(pair, u0, grid);
  FourierSeries2D w1raw(grid);
  for (int n = -grid; n <= grid; ++n) {
    for (int m = -grid; m <= grid; ++m) {
      if (m == 0 || std::abs(n) == std::abs(m)) continue;
      const Complex c = cube.coeff(n, m);
      if (c == Complex(0.0, 0.0)) continue;
      const double wt = frequency_at(ctx.omega, m);
      const double div = -omsq * static_cast<double>(n) * n + wt * wt;
      if (std::abs(div) < ctx.divisor_floor) {
        std::ostringstream os;
        os << "renorm side tables: small divisor at (n, m) = (" << n << ", "
           << m << ")";
        throw std::runtime_error(os.str());
      }
      const Complex v = ctx.epsilon * c / div;
      w1raw.set_coeff(n, m, v);
      const double arg = std::abs(omega * n) - wt;
      for (const auto& [h, chi] : scale_candidates(arg, ctx.C0, ctx.h_max))
        t.w.push_back({n, m, v * chi, h});
    }
  }

  // Projection insertion over one endpoint, carried exactly through the
  // Green kernel.
  const FourierSeries1D la0 = apply_L(gs, gs.a0);
  for (int d = 1; d <= std::min(la0.N, grid); ++d) {
    const Complex c = Complex(-6.0 * gamma, 0.0) * la0.coeff(d);
    if (c == Complex(0.0, 0.0)) continue;
    t.g.push_back({d, d, c, -1});
    t.g.push_back({-d, d, c, -1});
    t.g.push_back({d, -d, -c, -1});
    t.g.push_back({-d, -d, -c, -1});
  }

  // Diagonal cubic over the order-1 off-diagonal subtree and one
  // endpoint: the one order-1 side whose internal w-line needs its own
  // scale. Accumulated per delivered momentum and internal scale.
  std::map<std::tuple<int, int, int>, Complex> xacc;
  for (int n = -grid; n <= grid; ++n) {
    for (int m = -grid; m <= grid; ++m) {
      const Complex wv = w1raw.coeff(n, m);
      if (wv == Complex(0.0, 0.0)) continue;
      const double arg =
          std::abs(omega * n) - frequency_at(ctx.omega, m);
      const auto cands = scale_candidates(arg, ctx.C0, ctx.h_max);
      for (const SideEntry& ep : t.e) {
        const int in_n = n + ep.dn;
        const int in_m = m + ep.dm;
        if (std::abs(in_n) != std::abs(in_m)) continue;
        int sig_lo = -1, sig_hi = 1;
        if (in_n != 0) sig_lo = sig_hi = (in_m == in_n) ? 1 : -1;
        for (int sig = sig_lo; sig <= sig_hi; sig += 2) {
          for (int l1 = -cut; l1 <= cut; ++l1) {
            if ((l1 % 2) == 0) continue;
            for (int l2 = -cut; l2 <= cut; ++l2) {
              if ((l2 % 2) == 0) continue;
              const int q = l2 + in_n;
              const int dn = l1 + q;
              if (std::abs(dn) > grid) continue;
              const int j_lo = (q == 0) ? 1 : 2;
              const int j_hi = (q == 0) ? 1 : 4;
              for (int j = j_lo; j <= j_hi; ++j) {
                Complex f = -kernel_family_factor(gs, j, l1, l2) * wv *
                            ep.val;
                if (q != 0) {
                  const Complex iq(0.0, static_cast<double>(q));
                  f /= (j == 2) ? iq * iq : iq;
                }
                if (f == Complex(0.0, 0.0)) continue;
                for (const auto& [h, chi] : cands)
                  xacc[{dn, sig * dn, h}] += f * chi;
              }
            }
          }
        }
      }
    }
  }
  for (const auto& [key, v] : xacc) {
    if (v == Complex(0.0, 0.0)) continue;
    t.x.push_back({std::get<0>(key), std::get<1>(key), v, std::get<2>(key)});
  }
  return t;
}

// ---------------------------------------------------------------------
// Chain evaluation. The state walks the chain bottom-up carrying the
// integer label sums (A, S) of the processed part, the scale of the
// line it sits on, and the largest internal scale met so far; the
// delivered momentum of the processed part is (x / omega + A, m + S).

struct EvalBuckets {
  std::map<int, Complex> by_h[2];  // type index -> (h_T -> value)
};

using StateKey = std::tuple<int, int, int, int>;  // A, S, h_prev, h_max

EvalBuckets eval_graph(const SelfEnergyGraph& g, double x, int m,
                       const RenormContext& ctx,
                       const CountertermTable* table,
                       const SideTables& sides, bool at_local) {
  if (m == 0)
    throw std::invalid_argument("self-energy evaluation needs m != 0");
  if (g.path.empty())
    throw std::invalid_argument("self-energy graph has an empty chain");
  const double omega = std::sqrt(1.0 - ctx.epsilon);
  const GroundState& gs = *ctx.gs;
  const int cut = ctx.se_mode_cutoff;

  std::map<StateKey, Complex> cur;
  cur[{0, 0, g.ext_scale, -1}] = Complex(1.0, 0.0);
  EvalBuckets out;

  const auto bucket_type = [&](int S) {
    if (S == 0) return 0;
    if (S == -2 * m) return 1;
    return -1;
  };

  for (size_t i = 0; i < g.path.size(); ++i) {
    const SelfEnergyNode& nd = g.path[i];
    const bool top = (i + 1 == g.path.size());
    std::map<StateKey, Complex> next;

    if (nd.kind == 'n') {
      for (const auto& [key, val] : cur) {
        const auto [A, S, h_prev, h_seen] = key;
        const int m_in = m + S;
        const int m_out = (nd.nu_type == 'a') ? m_in : -m_in;
        const int S_out = m_out - m;
        if (table == nullptr)
          throw std::invalid_argument(
              "counterterm vertex needs a counterterm table");
        const auto vertex = [&](int h_line) {
          const int h_nu = std::min(h_prev, h_line);
          const double nu = table->at(nd.nu_type, std::min(h_nu, 1 << 20) >= 0
                                                      ? std::min(h_nu,
                                                                 table->h_max +
                                                                     1)
                                                      : -1,
                                      m_out);
          return (h_nu >= 0) ? std::ldexp(nu, -h_nu) : nu;
        };
        if (top) {
          if (A != 0) continue;
          const int t = bucket_type(S_out);
          if (t < 0) continue;
          out.by_h[t][h_seen] += val * vertex(g.ext_scale);
          continue;
        }
        const double y = x + omega * A;
        const double wt = frequency_at(ctx.omega, m_out);
        const double arg = std::abs(y) - wt;
        const double div = wt * wt - y * y;
        std::vector<std::pair<int, double>> cands;
        if (nd.h == kScaleSummed) {
          cands = scale_candidates(arg, ctx.C0, ctx.h_max);
        } else {
          const double chi = chi_partition(arg, nd.h, ctx.C0);
          if (chi > 0.0) cands.push_back({nd.h, chi});
        }
        for (const auto& [h_e, chi] : cands) {
          if (std::abs(div) < ctx.divisor_floor)
            throw std::runtime_error(
                "self-energy evaluation: small divisor on the chain");
          next[{A, S_out, h_e, std::max(h_seen, h_e)}] +=
              val * vertex(h_e) * chi / div;
        }
      }
      cur = std::move(next);
      continue;
    }

    const std::vector<SideEntry>& s0 = sides.of(nd.side[0].kind);
    const std::vector<SideEntry>& s1 = sides.of(nd.side[1].kind);

    for (const auto& [key, val] : cur) {
      const auto [A, S, h_prev, h_seen] = key;
      for (const SideEntry& e1 : s0) {
        if (nd.side[0].h != kScaleSummed && e1.h != nd.side[0].h) continue;
        for (const SideEntry& e2 : s1) {
          if (nd.side[1].h != kScaleSummed && e2.h != nd.side[1].h)
            continue;
          const int in_A = A + e1.dn + e2.dn;
          const int in_S = S + e1.dm + e2.dm;
          const int in_m = m + in_S;
          const Complex base = val * e1.val * e2.val;
          const int hs = std::max({h_seen, e1.h, e2.h});

          if (nd.kind == 'w') {
            if (in_m == 0) continue;
            const Complex wnode = base * ctx.epsilon;
            if (top) {
              if (in_A != 0) continue;
              const int t = bucket_type(in_S);
              if (t < 0) continue;
              out.by_h[t][hs] += wnode;
              continue;
            }
            const double y = x + omega * in_A;
            const double wt = frequency_at(ctx.omega, in_m);
            const double arg = std::abs(y) - wt;
            const double div = wt * wt - y * y;
            std::vector<std::pair<int, double>> cands;
            if (nd.h == kScaleSummed) {
              cands = scale_candidates(arg, ctx.C0, ctx.h_max);
            } else {
              const double chi = chi_partition(arg, nd.h, ctx.C0);
              if (chi > 0.0) cands.push_back({nd.h, chi});
            }
            // A chain segment below a line that repeats the entering
            // momentum (up to the sign of its m part) and carries only
            // lower scales is itself a flagged self-energy subgraph;
            // its regularized value vanishes at the localization point
            // where this evaluation runs for the scale sums.
            const bool repeats =
                in_A == 0 && (in_S == 0 || in_S == -2 * m);
            for (const auto& [h_e, chi] : cands) {
              if (repeats && h_e > hs) {
                if (at_local) continue;
                throw std::runtime_error(
                    "self-energy evaluation: nested resonance needs the "
                    "regularized value at the localization point");
              }
              if (std::abs(div) < ctx.divisor_floor)
                throw std::runtime_error(
                    "self-energy evaluation: small divisor on the chain");
              next[{in_A, in_S, h_e, std::max(hs, h_e)}] +=
                  wnode * chi / div;
            }
            continue;
          }

          // Diagonal cubic node: the entering momentum pins the virtual
          // integer part of the external line, so both diagonal sectors
          // stay admissible and are summed.
          for (int sig = -1; sig <= 1; sig += 2) {
            if (in_m == 0 && sig < 0 && false) continue;
            for (int l1 = -cut; l1 <= cut; ++l1) {
              if ((l1 % 2) == 0) continue;
              for (int l2 = -cut; l2 <= cut; ++l2) {
                if ((l2 % 2) == 0) continue;
                const int m_e = sig * l2 + in_m;
                if (m_e == 0) continue;
                const double qf =
                    x / omega + static_cast<double>(in_A + l2);
                if (std::abs(qf) < ctx.divisor_floor)
                  throw std::runtime_error(
                      "self-energy evaluation: vanishing polynomial "
                      "divisor on the chain");
                const Complex iq(0.0, qf);
                for (int j = 2; j <= 4; ++j) {
                  Complex f = -kernel_family_factor(gs, j, l1, l2) * base;
                  f /= (j == 2) ? iq * iq : iq;
                  if (f == Complex(0.0, 0.0)) continue;
                  next[{in_A + l1 + l2, sig * (l1 + l2) + in_S, -1, hs}] +=
                      f;
                }
              }
            }
          }
        }
      }
    }
    if (!top) cur = std::move(next);
  }

  for (auto& bt : out.by_h)
    for (auto& [h, v] : bt) v *= static_cast<double>(g.multiplicity);
  return out;
}

double real_checked(const Complex& v, const char* what) {
  if (std::abs(v.imag()) > 1e-8 * (1.0 + std::abs(v.real()))) {
    std::ostringstream os;
    os << what << ": value failed to close on the real axis, imag = "
       << v.imag();
    throw std::runtime_error(os.str());
  }
  return v.real();
}

// Structure catalogue. Chains are grown bottom-up; a chain is complete
// whenever its last node exits through a w-line and at least one line is
// internal.
void grow_chains(std::vector<SelfEnergyNode>& path, int order, int mult,
                 bool line_is_w, int k_max, char type,
                 std::vector<SelfEnergyGraph>* out) {
  if (!path.empty() && order >= 1) {
    const char last = path.back().kind;
    const bool w_exit = (last == 'w' || last == 'n');
    const bool has_internal = path.size() >= 2 || last == 'w';
    if (w_exit && has_internal) {
      SelfEnergyGraph g;
      g.type = type;
      g.k_T = order;
      g.multiplicity = mult;
      g.path = path;
      out->push_back(std::move(g));
    }
  }

  struct PairOpt {
    char s0, s1;
    int ord, mult;
  };
  static const PairOpt kPairs[] = {
      {'e', 'e', 0, 1}, {'e', 'w', 1, 2}, {'e', 'g', 1, 2}, {'e', 'x', 1, 2}};

  for (char kind : {'w', 'v'}) {
    const int node_cost = (kind == 'w') ? 1 : 0;
    for (const PairOpt& p : kPairs) {
      if (kind == 'v' && p.ord == 0 && !line_is_w) continue;
      if (order + node_cost + p.ord > k_max) continue;
      SelfEnergyNode nd;
      nd.kind = kind;
      nd.side[0].kind = p.s0;
      nd.side[1].kind = p.s1;
      path.push_back(nd);
      grow_chains(path, order + node_cost + p.ord, mult * 3 * p.mult,
                  kind == 'w', k_max, type, out);
      path.pop_back();
    }
  }
  if (line_is_w && order + 1 <= k_max) {
    for (char c : {'a', 'b'}) {
      SelfEnergyNode nd;
      nd.kind = 'n';
      nd.nu_type = c;
      path.push_back(nd);
      grow_chains(path, order + 1, mult, true, k_max, type, out);
      path.pop_back();
    }
  }
}

// ---------------------------------------------------------------------
// Flow driving terms.

// beta rows over h in [-1, h_max] for one mode, both types.
std::array<std::vector<double>, 2> beta_rows_for_m(
    const RenormContext& ctx, const CountertermTable& table,
    const SideTables& sides, const std::vector<SelfEnergyGraph>& graphs,
    int m) {
  std::array<std::vector<double>, 2> rows;
  rows[0].assign(static_cast<size_t>(ctx.h_max) + 2, 0.0);
  rows[1].assign(static_cast<size_t>(ctx.h_max) + 2, 0.0);
  const double wt = frequency_at(ctx.omega, m);
  for (int sgn = -1; sgn <= 1; sgn += 2) {
    const double x = sgn * wt;
    for (const SelfEnergyGraph& g : graphs) {
      const EvalBuckets b =
          eval_graph(g, x, m, ctx, &table, sides, /*at_local=*/true);
      for (int t = 0; t < 2; ++t) {
        for (const auto& [h, v] : b.by_h[t]) {
          rows[t][static_cast<size_t>(h + 1)] +=
              0.5 * real_checked(v, "beta_function");
        }
      }
    }
  }
  for (int t = 0; t < 2; ++t)
    for (int h = -1; h <= ctx.h_max; ++h)
      rows[t][static_cast<size_t>(h + 1)] =
          std::ldexp(rows[t][static_cast<size_t>(h + 1)], h + 1);
  if (ctx.single_counterterm) rows[1].assign(rows[1].size(), 0.0);
  return rows;
}

std::vector<SelfEnergyGraph> flow_catalogue(const RenormContext& ctx) {
  std::vector<SelfEnergyGraph> graphs =
      list_self_energy_graphs(ctx.K_se, 'a');
  if (ctx.single_counterterm) {
    std::vector<SelfEnergyGraph> kept;
    for (SelfEnergyGraph& g : graphs)
      if (g.path.size() == 1) kept.push_back(std::move(g));
    graphs = std::move(kept);
  }
  return graphs;
}

void install_diagonal_profile(FourierSeries2D& layer,
                              const FourierSeries1D& a, int n_max) {
  for (int n = 1; n <= n_max; ++n) {
    const Complex c = a.coeff(n);
    layer.set_coeff(n, n, c);
    layer.set_coeff(-n, n, c);
    layer.set_coeff(n, -n, -c);
    layer.set_coeff(-n, -n, -c);
  }
}

}  // namespace

// ---------------------------------------------------------------------

double CountertermTable::at(char type, int h, int m) const {
  const int t = type_index(type);
  if (m == 0)
    throw std::invalid_argument("CountertermTable::at: mode 0 is not split");
  if (h < -1)
    throw std::invalid_argument("CountertermTable::at: scale below -1");
  if (h > h_max) return 0.0;  // boundary value beyond the top scale
  const int am = std::min(std::abs(m), N);
  return nu[static_cast<size_t>(t)][static_cast<size_t>(h + 1)]
           [static_cast<size_t>(am - 1)];
}

std::string CountertermTable::to_json() const {
  nlohmann::json j;
  j["h_max"] = h_max;
  j["N"] = N;
  j["epsilon"] = epsilon;
  j["gamma"] = gamma;
  j["K_se"] = K_se;
  j["generations"] = generations;
  j["last_change"] = last_change;
  const char* names[2] = {"a", "b"};
  for (int t = 0; t < 2; ++t)
    j["nu"][names[t]] = nu[static_cast<size_t>(t)];
  return j.dump(2);
}

CountertermTable zero_counterterms(int h_max, int N, double epsilon,
                                   int K_se) {
  if (h_max < 0 || N < 1)
    throw std::invalid_argument("zero_counterterms: bad table shape");
  CountertermTable t;
  t.h_max = h_max;
  t.N = N;
  t.epsilon = epsilon;
  t.K_se = K_se;
  t.nu.assign(2, std::vector<std::vector<double>>(
                     static_cast<size_t>(h_max) + 2,
                     std::vector<double>(static_cast<size_t>(N), 0.0)));
  return t;
}

int SelfEnergyGraph::h_T() const {
  int h = -1;
  for (const SelfEnergyNode& nd : path) {
    if (nd.h != kScaleSummed) h = std::max(h, nd.h);
    for (const SelfEnergySide& s : nd.side)
      if (s.h != kScaleSummed) h = std::max(h, s.h);
  }
  return h;
}

std::vector<SelfEnergyGraph> list_self_energy_graphs(int k_max, char type) {
  if (k_max < 1 || k_max > 2)
    throw std::invalid_argument(
        "list_self_energy_graphs: the chain catalogue stops at order 2");
  type_index(type);
  std::vector<SelfEnergyGraph> out;
  std::vector<SelfEnergyNode> path;
  grow_chains(path, 0, 1, true, k_max, type, &out);
  return out;
}

std::vector<std::pair<int, double>> scale_candidates(double arg, double C0,
                                                     int h_cap) {
  if (!(C0 > 0.0) || C0 > 0.5)
    throw std::invalid_argument("scale_candidates: C0 must lie in (0, 1/2]");
  if (h_cap < 0)
    throw std::invalid_argument("scale_candidates: h_cap must be >= 0");
  std::vector<std::pair<int, double>> out;
  if (arg == 0.0) return out;  // the exact-resonance hole has no scale
  const double w_low = chi_partition(arg, -1, C0);
  if (w_low > 0.0) out.push_back({-1, w_low});
  const double ax = std::abs(arg);
  if (ax < 2.0 * C0) {
    const double lg = std::log2(C0 / ax);
    const int h_lo = std::max(0, static_cast<int>(std::floor(lg)) - 1);
    for (int h = h_lo; h <= std::min(h_lo + 3, h_cap - 1); ++h) {
      const double w = chi_partition(arg, h, C0);
      if (w > 0.0) out.push_back({h, w});
    }
    // Scales at h_cap and beyond are lumped at h_cap with the tail
    // weight, keeping the candidate weights an exact partition of one.
    if (h_lo + 3 >= h_cap) {
      const double tail = chi_bump(std::ldexp(arg, h_cap), C0);
      if (tail > 0.0) out.push_back({h_cap, tail});
    }
  }
  return out;
}

double self_energy_value(const SelfEnergyGraph& T, double x, int m,
                         const RenormContext& ctx,
                         const CountertermTable* table) {
  validate_context(ctx);
  const double wt = frequency_at(ctx.omega, m);
  const SideTables sides = build_side_tables(ctx, ctx.gamma);
  const bool at_local = std::abs(std::abs(x) - wt) <= 1e-12;
  const EvalBuckets b = eval_graph(T, x, m, ctx, table, sides, at_local);
  Complex total(0.0, 0.0);
  for (const auto& [h, v] : b.by_h[static_cast<size_t>(type_index(T.type))])
    total += v;
  return real_checked(total, "self_energy_value");
}

double regularize(const SelfEnergyGraph& T, double x, int m,
                  const RenormContext& ctx, const CountertermTable* table) {
  const double wt = frequency_at(ctx.omega, m);
  const double anchor = (x >= 0.0) ? wt : -wt;
  return self_energy_value(T, x, m, ctx, table) -
         self_energy_value(T, anchor, m, ctx, table);
}

double regularize_by_quadrature(const SelfEnergyGraph& T, double x, int m,
                                const RenormContext& ctx,
                                const CountertermTable* table) {
  static const double kNode[5] = {0.046910077030668004, 0.23076534494715845,
                                  0.5, 0.76923465505284155,
                                  0.953089922969332};
  static const double kWeight[5] = {0.11846344252809454, 0.23931433524968324,
                                    0.28444444444444444, 0.23931433524968324,
                                    0.11846344252809454};
  const double wt = frequency_at(ctx.omega, m);
  const double anchor = (x >= 0.0) ? wt : -wt;
  const double span = x - anchor;
  if (span == 0.0) return 0.0;
  const double step = 1e-6 * (1.0 + std::abs(x));
  double acc = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double y = anchor + kNode[i] * span;
    const double d = (self_energy_value(T, y + step, m, ctx, table) -
                      self_energy_value(T, y - step, m, ctx, table)) /
                     (2.0 * step);
    acc += kWeight[i] * d;
  }
  return span * acc;
}

std::pair<double, double> beta_function(int h, int m,
                                        const CountertermTable& table,
                                        const RenormContext& ctx) {
  validate_context(ctx);
  if (h < -1 || h > ctx.h_max)
    throw std::invalid_argument("beta_function: scale outside [-1, h_max]");
  if (m < 1)
    throw std::invalid_argument("beta_function: mode must be >= 1");
  const SideTables sides = build_side_tables(ctx, ctx.gamma);
  const std::vector<SelfEnergyGraph> graphs = flow_catalogue(ctx);
  const auto rows = beta_rows_for_m(ctx, table, sides, graphs, m);
  return {rows[0][static_cast<size_t>(h + 1)],
          rows[1][static_cast<size_t>(h + 1)]};
}

CountertermTable nu_fixed_point(const RenormContext& ctx, int h_max,
                                int q_max, double tol) {
  validate_context(ctx);
  if (h_max < 0 || h_max != ctx.h_max)
    throw std::invalid_argument(
        "nu_fixed_point: h_max must match the context");
  if (q_max < 1) throw std::invalid_argument("nu_fixed_point: q_max < 1");
  if (!(tol > 0.0)) throw std::invalid_argument("nu_fixed_point: tol <= 0");

  CountertermTable table =
      zero_counterterms(h_max, ctx.N, ctx.epsilon, ctx.K_se);
  table.gamma = ctx.gamma;
  const std::vector<SelfEnergyGraph> graphs = flow_catalogue(ctx);
  const SideTables sides = build_side_tables(ctx, ctx.gamma);

  double prev_change = -1.0;
  int rises = 0;
  for (int q = 1; q <= q_max; ++q) {
    CountertermTable next = table;
    std::vector<std::exception_ptr> errs(static_cast<size_t>(ctx.N));
#ifdef RWAVE_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int m = 1; m <= ctx.N; ++m) {
      try {
        const auto rows = beta_rows_for_m(ctx, table, sides, graphs, m);
        for (int t = 0; t < 2; ++t) {
          double suffix = 0.0;  // sum_k 2^{-k-2} beta_k from h_max-1 down
          for (int h = h_max; h >= -1; --h) {
            double value = 0.0;
            if (h < h_max) {
              suffix +=
                  std::ldexp(rows[t][static_cast<size_t>(h + 1)], -h - 2);
              value = -std::ldexp(suffix, h + 1);
            }
            next.nu[static_cast<size_t>(t)][static_cast<size_t>(h + 1)]
                   [static_cast<size_t>(m - 1)] = value;
          }
        }
      } catch (...) {
        errs[static_cast<size_t>(m - 1)] = std::current_exception();
      }
    }
    for (const std::exception_ptr& e : errs)
      if (e) std::rethrow_exception(e);

    double change = 0.0;
    for (int t = 0; t < 2; ++t)
      for (int h = -1; h <= h_max; ++h)
        for (int m = 1; m <= ctx.N; ++m)
          change = std::max(
              change,
              std::abs(next.nu[static_cast<size_t>(t)]
                              [static_cast<size_t>(h + 1)]
                              [static_cast<size_t>(m - 1)] -
                       table.nu[static_cast<size_t>(t)]
                               [static_cast<size_t>(h + 1)]
                               [static_cast<size_t>(m - 1)]));
    table = std::move(next);
    table.generations = q;
    table.last_change = change;
    if (change <= tol) break;
    if (prev_change >= 0.0 && change > prev_change) {
      if (++rises >= 3)
        throw std::runtime_error(
            "nu_fixed_point: sup-change grew three sweeps in a row; the "
            "flow is not contracting at these parameters");
    } else {
      rises = 0;
    }
    prev_change = change;
  }

  double sup = 0.0;
  for (const auto& bt : table.nu)
    for (const auto& row : bt)
      for (double v : row) sup = std::max(sup, std::abs(v));
  if (sup > ctx.nu_bound_D * ctx.epsilon + 1e-300) {
    std::ostringstream os;
    os << "nu_fixed_point: counterterm bound exceeded, sup = " << sup
       << " > " << ctx.nu_bound_D << " * eps";
    throw std::runtime_error(os.str());
  }
  return table;
}

ResummedExpansion resummed_layers(const RenormContext& ctx,
                                  const CountertermTable& table, int K) {
  validate_context(ctx);
  if (K < 1) throw std::invalid_argument("resummed_layers: K must be >= 1");
  ExpansionConfig cfg;
  cfg.K = K;
  cfg.N = ctx.N;
  cfg.epsilon = ctx.epsilon;
  cfg.divisor_floor = ctx.divisor_floor;
  std::vector<double> nu_a(static_cast<size_t>(ctx.N));
  std::vector<double> nu_b(static_cast<size_t>(ctx.N));
  for (int m = 1; m <= ctx.N; ++m) {
    nu_a[static_cast<size_t>(m - 1)] = table.at('a', -1, m);
    nu_b[static_cast<size_t>(m - 1)] = table.at('b', -1, m);
  }
  ResummedExpansion re{init_expansion(cfg, ctx.omega, nu_a, nu_b), {0.0}};
  ExpansionState& st = re.state;
  const FourierSeries1D la0 = apply_L(st.gs, st.gs.a0);
  for (int k = 1; k <= K; ++k) {
    st.orders.push_back(w_k(st, k));
    FourierSeries1D f;
    try {
      f = f_k(st, k);
    } catch (...) {
      st.orders.pop_back();
      throw;
    }
    FourierSeries1D a = apply_L(st.gs, f);
    if (k == 1)
      a = add(a, scale(la0, Complex(-6.0 * table.gamma, 0.0)));
    install_diagonal_profile(st.orders.back(), a, st.sub_N);
    if (dirichlet_defect(st.orders.back()) != 0.0) {
      st.orders.pop_back();
      throw std::logic_error("resummed_layers: symmetry relations broken");
    }
    const double c_tilde = solve_Ak(st.gs, f).C;
    st.A.push_back(std::move(a));
    st.C.push_back(c_tilde);
    re.C_tilde.push_back(c_tilde);
  }
  return re;
}

double gamma_fixed_point(const RenormContext& ctx, double tol) {
  validate_context(ctx);
  if (!(tol > 0.0))
    throw std::invalid_argument("gamma_fixed_point: tol <= 0");
  double gamma = 0.0;
  double prev_change = -1.0;
  int rises = 0;
  for (int q = 1; q <= 40; ++q) {
    RenormContext cq = ctx;
    cq.gamma = gamma;
    CountertermTable table =
        nu_fixed_point(cq, ctx.h_max, /*q_max=*/60, /*tol=*/1e-14);
    table.gamma = gamma;
    const ResummedExpansion re = resummed_layers(cq, table, ctx.K_gamma);
    double next = 0.0;
    for (int k = 1; k <= ctx.K_gamma; ++k)
      next += re.C_tilde[static_cast<size_t>(k)];
    const double change = std::abs(next - gamma);
    gamma = next;
    if (change <= tol) return gamma;
    if (prev_change >= 0.0 && change > prev_change) {
      if (++rises >= 3)
        throw std::runtime_error(
            "gamma_fixed_point: updates grew three sweeps in a row; the "
            "self-consistence iteration is not contracting");
    } else {
      rises = 0;
    }
    prev_change = change;
  }
  throw std::runtime_error(
      "gamma_fixed_point: no convergence within the sweep budget");
}

double nu_gamma_sensitivity(const RenormContext& ctx, double gamma1,
                            double gamma2) {
  validate_context(ctx);
  if (gamma1 == gamma2) return 0.0;
  RenormContext c1 = ctx;
  c1.gamma = gamma1;
  RenormContext c2 = ctx;
  c2.gamma = gamma2;
  const CountertermTable t1 = nu_fixed_point(c1, ctx.h_max, 60, 1e-14);
  const CountertermTable t2 = nu_fixed_point(c2, ctx.h_max, 60, 1e-14);
  double sup = 0.0;
  for (int t = 0; t < 2; ++t)
    for (int h = -1; h <= ctx.h_max; ++h)
      for (int m = 1; m <= ctx.N; ++m)
        sup = std::max(sup, std::abs(t1.nu[static_cast<size_t>(t)]
                                          [static_cast<size_t>(h + 1)]
                                          [static_cast<size_t>(m - 1)] -
                                     t2.nu[static_cast<size_t>(t)]
                                          [static_cast<size_t>(h + 1)]
                                          [static_cast<size_t>(m - 1)]));
  return sup / std::abs(gamma1 - gamma2);
}

std::string ResummationReport::to_json() const {
  nlohmann::json j;
  j["epsilon"] = epsilon;
  j["gamma"] = gamma;
  j["K_lo"] = K_lo;
  j["K_hi"] = K_hi;
  j["residual_lo"] = residual_lo;
  j["residual_hi"] = residual_hi;
  j["residual_decreasing"] = residual_decreasing;
  j["insertion_defect"] = insertion_defect;
  j["modes"] = nlohmann::json::array();
  for (const ModeDefect& d : modes) {
    j["modes"].push_back({{"n", d.n},
                          {"m", d.m},
                          {"residual", d.residual},
                          {"insertion", d.insertion}});
  }
  return j.dump(2);
}

ResummationReport verify_resummed_solution(const RenormContext& ctx) {
  validate_context(ctx);
  ResummationReport rep;
  rep.epsilon = ctx.epsilon;
  rep.K_lo = 2;
  rep.K_hi = 3;

  const double gamma = gamma_fixed_point(ctx, 1e-12);
  RenormContext cq = ctx;
  cq.gamma = gamma;
  CountertermTable table = nu_fixed_point(cq, ctx.h_max, 60, 1e-14);
  table.gamma = gamma;
  rep.gamma = gamma;

  const double omsq = 1.0 - ctx.epsilon;
  const auto residual_of = [&](int K, bool collect) {
    const ResummedExpansion re = resummed_layers(cq, table, K);
    const int N = ctx.N;
    FourierSeries2D u(N);
    for (const FourierSeries2D& layer : re.state.orders) u = add(u, layer);
    const FourierSeries2D pair = conv2d(u, u, 2 * N);
    const FourierSeries2D cube = conv2d(pair, u, N);
    double worst = 0.0;
    for (int n = -N; n <= N; ++n) {
      for (int m = -N; m <= N; ++m) {
        if (m == 0 || std::abs(n) == std::abs(m)) continue;
        const double wt = frequency_at(ctx.omega, m);
        const double div = -omsq * static_cast<double>(n) * n + wt * wt;
        const Complex row =
            div * u.coeff(n, m) -
            (table.at('a', -1, m) * u.coeff(n, m) +
             table.at('b', -1, m) * u.coeff(n, -m)) -
            ctx.epsilon * cube.coeff(n, m);
        const double r = std::abs(row);
        worst = std::max(worst, r);
        if (!collect || std::abs(n) > 6 || std::abs(m) > 6) continue;
        const double insertion_weight =
            std::abs(table.at('a', -1, m) * u.coeff(n, m) +
                     table.at('b', -1, m) * u.coeff(n, -m)) /
            std::abs(div);
        const double omega = std::sqrt(omsq);
        const double arg = std::abs(omega * n) - wt;
        double chi_sum = 0.0;
        for (const auto& [h, w] : scale_candidates(arg, ctx.C0, ctx.h_max))
          chi_sum += w;
        const double defect = std::abs(chi_sum - 1.0) * insertion_weight;
        rep.modes.push_back({n, m, r, defect});
        rep.insertion_defect = std::max(rep.insertion_defect, defect);
      }
    }
    return worst;
  };

  rep.residual_lo = residual_of(rep.K_lo, false);
  rep.residual_hi = residual_of(rep.K_hi, true);
  rep.residual_decreasing = rep.residual_hi <= rep.residual_lo;
  return rep;
}

}  // namespace rwave
