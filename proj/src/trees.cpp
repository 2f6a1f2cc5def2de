#include "rwave/trees.hpp"

#ifdef RWAVE_HAVE_OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "rwave/parallel.hpp"

namespace rwave {

// Kernel families of the diagonal Green operator, split so that
//   (node factor) * (propagator of the exiting line)
// reproduces one summand of the dense kernel:
//   j=1: p(a) p(b) / beta        exiting momentum 0, propagator 1
//   j=2: beta cd(a) cd(b)        propagator 1/(i q)^2
//   j=3: p(a) cd(b)              propagator 1/(i q)
//   j=4: -cd(a) p(b)             propagator 1/(i q)
// with a the first (outgoing-side) mode and b the second mode. Node
// factors carry an extra overall minus sign because the forcing enters
// the diagonal equation negated.
Complex kernel_family_factor(const GroundState& gs, int j, int a, int b) {
  switch (j) {
    case 1:
      return gs.p.coeff(a) * gs.p.coeff(b) / gs.beta;
    case 2:
      return gs.beta * gs.cd.coeff(a) * gs.cd.coeff(b);
    case 3:
      return gs.p.coeff(a) * gs.cd.coeff(b);
    case 4:
      return -(gs.cd.coeff(a) * gs.p.coeff(b));
    default:
      throw std::invalid_argument(
          "kernel_family_factor: family must be in 1..4");
  }
}

namespace {

double freq_at(const TreeContext& ctx, int m) {
  return frequency_at(ctx.omega, m);
}

double nu_at(const TreeContext& ctx, char type, int m) {
  const std::vector<double>& table = (type == 'b') ? ctx.nu_b : ctx.nu_a;
  const int idx = std::abs(m) - 1;
  if (idx < 0 || idx >= static_cast<int>(table.size())) return 0.0;
  return table[static_cast<size_t>(idx)];
}

// ---------------------------------------------------------------------
// Shape enumeration.
//
// Subtree families by the badge of the exiting line and the order:
//   U(0) = { end-point }                       (the only order-0 object)
//   V(k) = diagonal-rooted subtrees of order k:
//            a projection insertion (s = 1, order label k) over one
//            end-point, or a cubic node over an ordered triple of
//            children with orders summing to k, where a child of full
//            order k must come from W(k) -- an order-k factor feeds the
//            cube only through the off-diagonal part.
//   W(k) = off-diagonal-rooted subtrees of order k:
//            a cubic node (one power of epsilon) over an ordered triple
//            with orders summing to k-1, or a counterterm vertex over
//            one W(k-1) child (k >= 2).
// The full-order filter on cubic diagonal nodes is what keeps the
// expansion triangular: it removes exactly the terms the Green operator
// of the linearized profile equation already absorbs.

struct ShapeNode {
  NodeKind kind = NodeKind::kEndPoint;
  int s = 0;
  int k_v = 0;
  std::vector<ShapeNode> kids;
};

struct ShapeTables {
  std::vector<std::vector<ShapeNode>> V;  // index = order
  std::vector<std::vector<ShapeNode>> W;
};

ShapeNode endpoint_shape() { return ShapeNode{NodeKind::kEndPoint, 0, 0, {}}; }

ShapeTables build_shape_tables(int k_max) {
  ShapeTables t;
  t.V.resize(static_cast<size_t>(k_max) + 1);
  t.W.resize(static_cast<size_t>(k_max) + 1);
  const auto u_pool = [&t](int k) {
    std::vector<ShapeNode> u;
    if (k == 0) {
      u.push_back(endpoint_shape());
      return u;
    }
    u = t.V[static_cast<size_t>(k)];
    u.insert(u.end(), t.W[static_cast<size_t>(k)].begin(),
             t.W[static_cast<size_t>(k)].end());
    return u;
  };
  for (int k = 1; k <= k_max; ++k) {
    auto& wk = t.W[static_cast<size_t>(k)];
    for (int k1 = 0; k1 <= k - 1; ++k1) {
      for (int k2 = 0; k1 + k2 <= k - 1; ++k2) {
        const int k3 = k - 1 - k1 - k2;
        for (const ShapeNode& c1 : u_pool(k1))
          for (const ShapeNode& c2 : u_pool(k2))
            for (const ShapeNode& c3 : u_pool(k3))
              wk.push_back(ShapeNode{NodeKind::kWNode, 3, 0, {c1, c2, c3}});
      }
    }
    if (k >= 2) {
      for (const ShapeNode& c : t.W[static_cast<size_t>(k - 1)])
        wk.push_back(ShapeNode{NodeKind::kWNode, 1, 0, {c}});
    }
    auto& vk = t.V[static_cast<size_t>(k)];
    vk.push_back(ShapeNode{NodeKind::kVNode, 1, k, {endpoint_shape()}});
    for (int k1 = 0; k1 <= k; ++k1) {
      for (int k2 = 0; k1 + k2 <= k; ++k2) {
        const int k3 = k - k1 - k2;
        const auto pool = [&](int kc) {
          return kc == k ? t.W[static_cast<size_t>(k)] : u_pool(kc);
        };
        for (const ShapeNode& c1 : pool(k1))
          for (const ShapeNode& c2 : pool(k2))
            for (const ShapeNode& c3 : pool(k3))
              vk.push_back(ShapeNode{NodeKind::kVNode, 3, 0, {c1, c2, c3}});
      }
    }
  }
  return t;
}

// Preorder materialization. Node i's exiting line gets id i, so a tree
// has exactly as many lines as nodes and root_line = 0.
int materialize_node(const ShapeNode& sn, int parent, Tree& t) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  t.lines.emplace_back();
  t.nodes[static_cast<size_t>(id)].id = id;
  t.nodes[static_cast<size_t>(id)].kind = sn.kind;
  t.nodes[static_cast<size_t>(id)].s = sn.s;
  t.nodes[static_cast<size_t>(id)].k_v = sn.k_v;
  TreeLine& ln = t.lines[static_cast<size_t>(id)];
  ln.id = id;
  ln.from = id;
  ln.to = parent;
  ln.badge = (sn.kind == NodeKind::kWNode) ? LineBadge::kW : LineBadge::kV;
  for (const ShapeNode& c : sn.kids) {
    const int cid = materialize_node(c, id, t);
    t.nodes[static_cast<size_t>(id)].children.push_back(cid);
  }
  return id;
}

Tree materialize(const ShapeNode& root, int order) {
  Tree t;
  materialize_node(root, -1, t);
  t.root_line = 0;
  t.order = order;
  return t;
}

void postorder(const Tree& t, int id, std::vector<int>& out) {
  for (int c : t.nodes[static_cast<size_t>(id)].children)
    postorder(t, t.lines[static_cast<size_t>(c)].from, out);
  out.push_back(id);
}

// ---------------------------------------------------------------------
// Label enumeration over one shape. Nodes are labeled in postorder so
// every node sees the momenta its children deliver. A subtree delivers
// the momentum of its exiting line plus the first mode of its top node
// (end-points deliver their harmonic, off-diagonal subtrees their line
// momentum).

struct LabelScan {
  int target_n = 0;
  int target_m = 0;
  int clip = 0;  // per-delivery momentum clip, INT_MAX when unset
  const std::vector<int>* labels = nullptr;
  long long max_iterations = 0;
  long long max_trees = 0;
  std::vector<Tree>* out = nullptr;
  long long iterations = 0;
  long long base_iterations = 0;  // spent by other shapes at scan start
  long long base_trees = 0;
};

void bump(LabelScan& sc) {
  ++sc.iterations;
  if (sc.base_iterations + sc.iterations > sc.max_iterations)
    throw std::runtime_error(
        "enumerate_trees: label iteration budget exceeded");
}

void scan_labels(LabelScan& sc, Tree& cur, const std::vector<int>& post,
                 std::vector<Mode>& delivered, size_t idx) {
  if (idx == post.size()) {
    if (sc.base_trees + static_cast<long long>(sc.out->size()) >=
        sc.max_trees)
      throw std::runtime_error("enumerate_trees: tree budget exceeded");
    sc.out->push_back(cur);
    return;
  }
  const int id = post[idx];
  TreeNode& nd = cur.nodes[static_cast<size_t>(id)];
  TreeLine& ln = cur.lines[static_cast<size_t>(id)];
  const bool at_root = (ln.to == -1);

  if (nd.kind == NodeKind::kEndPoint) {
    for (int lab : *sc.labels) {
      for (int sg = -1; sg <= 1; sg += 2) {
        bump(sc);
        if (std::abs(lab) > sc.clip) continue;
        nd.first = Mode{lab, sg * lab};
        delivered[static_cast<size_t>(id)] = nd.first;
        if (at_root && (lab != sc.target_n || sg * lab != sc.target_m))
          continue;
        scan_labels(sc, cur, post, delivered, idx + 1);
      }
    }
    return;
  }

  Mode in{0, 0};
  for (int c : nd.children) {
    in.n += delivered[static_cast<size_t>(c)].n;
    in.m += delivered[static_cast<size_t>(c)].m;
  }

  if (nd.kind == NodeKind::kWNode && nd.s == 3) {
    bump(sc);
    if (in.m == 0 || std::abs(in.n) == std::abs(in.m)) return;
    if (std::abs(in.n) > sc.clip || std::abs(in.m) > sc.clip) return;
    if (at_root && (in.n != sc.target_n || in.m != sc.target_m)) return;
    ln.momentum = in;
    delivered[static_cast<size_t>(id)] = in;
    scan_labels(sc, cur, post, delivered, idx + 1);
    return;
  }

  if (nd.kind == NodeKind::kWNode && nd.s == 1) {
    for (int pick = 0; pick < 2; ++pick) {
      bump(sc);
      const char c = (pick == 0) ? 'a' : 'b';
      const int mo = (c == 'a') ? in.m : -in.m;
      if (at_root && (in.n != sc.target_n || mo != sc.target_m)) continue;
      nd.nu_type = c;
      ln.momentum = Mode{in.n, mo};
      delivered[static_cast<size_t>(id)] = ln.momentum;
      scan_labels(sc, cur, post, delivered, idx + 1);
    }
    return;
  }

  // Diagonal node (s = 3 or s = 1). The entering momentum must sit on
  // one of the two diagonals; the node then acts within that sector.
  if (std::abs(in.n) != std::abs(in.m)) return;
  if (std::abs(in.n) > sc.clip) return;
  int sig_lo = -1, sig_hi = 1;
  if (in.n != 0) sig_lo = sig_hi = (in.m == in.n) ? 1 : -1;
  for (int sig = sig_lo; sig <= sig_hi; sig += 2) {
    for (int lab1 : *sc.labels) {
      for (int lab2 : *sc.labels) {
        const int q = lab2 + in.n;
        const int j_lo = (q == 0) ? 1 : 2;
        const int j_hi = (q == 0) ? 1 : 4;
        for (int j = j_lo; j <= j_hi; ++j) {
          bump(sc);
          const int dn = lab1 + q;
          if (std::abs(dn) > sc.clip) continue;
          if (at_root && (dn != sc.target_n || sig * dn != sc.target_m))
            continue;
          nd.j = j;
          nd.first = Mode{lab1, sig * lab1};
          nd.second = Mode{lab2, sig * lab2};
          ln.momentum = Mode{q, sig * q};
          ln.delta = (q == 0) ? 0 : ((j == 2) ? 2 : 1);
          delivered[static_cast<size_t>(id)] = Mode{dn, sig * dn};
          scan_labels(sc, cur, post, delivered, idx + 1);
        }
      }
    }
  }
}

// Delivered momentum recomputed from labels alone; false on a tree whose
// stored line momenta disagree or whose badges contradict the momenta.
bool recompute_and_check(const Tree& t, int id, Mode& d) {
  const TreeNode& nd = t.nodes[static_cast<size_t>(id)];
  const TreeLine& ln = t.lines[static_cast<size_t>(id)];
  Mode in{0, 0};
  for (int c : nd.children) {
    Mode dc;
    if (!recompute_and_check(t, t.lines[static_cast<size_t>(c)].from, dc))
      return false;
    in.n += dc.n;
    in.m += dc.m;
  }
  Mode out{0, 0};
  switch (nd.kind) {
    case NodeKind::kEndPoint:
      out = Mode{0, 0};
      d = nd.first;
      break;
    case NodeKind::kWNode:
      out = (nd.s == 1) ? Mode{in.n, (nd.nu_type == 'b') ? -in.m : in.m}
                        : in;
      d = out;
      break;
    case NodeKind::kVNode:
      out = Mode{nd.second.n + in.n, nd.second.m + in.m};
      d = Mode{nd.first.n + out.n, nd.first.m + out.m};
      break;
  }
  if (ln.momentum.n != out.n || ln.momentum.m != out.m) return false;
  const bool diag = std::abs(out.n) == std::abs(out.m);
  if (ln.badge == LineBadge::kV && !diag) return false;
  if (ln.badge == LineBadge::kW && diag) return false;
  return true;
}

const char* kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::kVNode:
      return "v";
    case NodeKind::kWNode:
      return "w";
    case NodeKind::kEndPoint:
      return "e";
  }
  return "?";
}

void install_diagonal_layer(FourierSeries2D& layer, const FourierSeries1D& a,
                            int n_max) {
  for (int n = 1; n <= n_max; ++n) {
    const Complex c = a.coeff(n);
    layer.set_coeff(n, n, c);
    layer.set_coeff(-n, n, c);
    layer.set_coeff(n, -n, -c);
    layer.set_coeff(-n, -n, -c);
  }
}

// Ordered graded triple sum: every (k1, k2, k3) with k1 + k2 + k3 =
// target contributes L[k1] * L[k2] * L[k3]. Pair products are carried at
// twice the grid so every retained output mode is an exact sum.
FourierSeries2D triple_sum(const std::vector<FourierSeries2D>& L, int target,
                           int grid_n) {
  if (target >= static_cast<int>(L.size()))
    throw std::invalid_argument("triple_sum: missing layers");
  std::vector<FourierSeries2D> pair;
  pair.reserve(static_cast<size_t>(target) + 1);
  for (int s = 0; s <= target; ++s) {
    FourierSeries2D ps(2 * grid_n);
    for (int i = 0; i <= s; ++i)
      ps = add(ps, conv2d(L[static_cast<size_t>(i)],
                          L[static_cast<size_t>(s - i)], 2 * grid_n));
    pair.push_back(ps);
  }
  FourierSeries2D acc(grid_n);
  for (int s = 0; s <= target; ++s)
    acc = add(acc, conv2d(pair[static_cast<size_t>(s)],
                          L[static_cast<size_t>(target - s)], grid_n));
  return acc;
}

struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(static_cast<size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] =
          parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

ShapeCensus enumerate_shapes(int k) {
  if (k < 1 || k > 3)
    throw std::invalid_argument("enumerate_shapes: order must be in 1..3");
  const ShapeTables t = build_shape_tables(k);
  ShapeCensus out;
  for (const ShapeNode& sn : t.V[static_cast<size_t>(k)])
    out.v_rooted.push_back(materialize(sn, k));
  for (const ShapeNode& sn : t.W[static_cast<size_t>(k)])
    out.w_rooted.push_back(materialize(sn, k));
  return out;
}

std::vector<Tree> enumerate_trees(int k, int n, int m, int mode_cutoff,
                                  const EnumOptions& opt) {
  if (k < 1 || k > 3)
    throw std::invalid_argument("enumerate_trees: order must be in 1..3");
  if (mode_cutoff < 1 || mode_cutoff > 8)
    throw std::invalid_argument(
        "enumerate_trees: mode cutoff must be in 1..8");
  if (n == 0 && m == 0)
    throw std::invalid_argument(
        "enumerate_trees: root momentum (0, 0) is not admissible");
  const bool diagonal = (std::abs(n) == std::abs(m));
  // Off-diagonal coefficients with m = 0 cancel in sign-flipped pairs and
  // the stored layers keep no such entries, so the listing is empty.
  if (!diagonal && m == 0) return {};

  std::vector<int> labels;
  const int step = opt.odd_labels_only ? 2 : 1;
  for (int v = 1; v <= mode_cutoff; v += step) {
    labels.push_back(v);
    labels.push_back(-v);
  }

  const ShapeCensus shapes = enumerate_shapes(k);
  const std::vector<Tree>& pool =
      diagonal ? shapes.v_rooted : shapes.w_rooted;
  const int clip = opt.momentum_cutoff > 0 ? opt.momentum_cutoff
                                           : std::numeric_limits<int>::max();

  std::vector<std::vector<Tree>> results(pool.size());
  std::vector<std::exception_ptr> errors(pool.size());
  std::atomic<long long> iter_total{0};
  std::atomic<long long> tree_total{0};
  std::atomic<bool> failed{false};

#ifdef RWAVE_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int si = 0; si < static_cast<int>(pool.size()); ++si) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      Tree cur = pool[static_cast<size_t>(si)];
      std::vector<int> post;
      postorder(cur, cur.lines[static_cast<size_t>(cur.root_line)].from,
                post);
      std::vector<Mode> delivered(cur.nodes.size());
      LabelScan sc;
      sc.target_n = n;
      sc.target_m = m;
      sc.clip = clip;
      sc.labels = &labels;
      sc.max_iterations = opt.max_iterations;
      sc.max_trees = opt.max_trees;
      sc.out = &results[static_cast<size_t>(si)];
      sc.base_iterations = iter_total.load(std::memory_order_relaxed);
      sc.base_trees = tree_total.load(std::memory_order_relaxed);
      scan_labels(sc, cur, post, delivered, 0);
      iter_total.fetch_add(sc.iterations, std::memory_order_relaxed);
      tree_total.fetch_add(
          static_cast<long long>(results[static_cast<size_t>(si)].size()),
          std::memory_order_relaxed);
    } catch (...) {
      errors[static_cast<size_t>(si)] = std::current_exception();
      failed.store(true, std::memory_order_relaxed);
    }
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<Tree> out;
  for (std::vector<Tree>& r : results) {
    out.insert(out.end(), r.begin(), r.end());
    r.clear();
  }
  return out;
}

Complex tree_value(const Tree& t, const TreeContext& ctx) {
  if (ctx.gs == nullptr)
    throw std::invalid_argument("tree_value: ground state missing");
  const GroundState& gs = *ctx.gs;
  const double omega_sq = 1.0 - ctx.epsilon;
  Complex val(1.0, 0.0);

  for (const TreeNode& nd : t.nodes) {
    switch (nd.kind) {
      case NodeKind::kEndPoint:
        val *= gs.a0.coeff(nd.first.m);
        break;
      case NodeKind::kVNode: {
        const Complex base =
            kernel_family_factor(gs, nd.j, nd.first.n, nd.second.n);
        if (nd.s == 3) {
          val *= -base;
        } else {
          if (nd.k_v < 1 || nd.k_v >= static_cast<int>(ctx.C.size()))
            throw std::invalid_argument(
                "tree_value: projection constant unavailable for this "
                "order");
          val *= Complex(-6.0 * ctx.C[static_cast<size_t>(nd.k_v)], 0.0) *
                 base;
        }
        break;
      }
      case NodeKind::kWNode: {
        if (nd.s == 3) {
          val *= ctx.epsilon;
        } else {
          const TreeLine* exit = nullptr;
          for (const TreeLine& ln : t.lines)
            if (ln.from == nd.id) exit = &ln;
          if (exit == nullptr)
            throw std::invalid_argument(
                "tree_value: counterterm vertex has no exiting line");
          val *= nu_at(ctx, nd.nu_type, exit->momentum.m);
        }
        break;
      }
    }
  }

  for (const TreeLine& ln : t.lines) {
    if (ln.badge == LineBadge::kW) {
      const double om = freq_at(ctx, ln.momentum.m);
      const double nn = static_cast<double>(ln.momentum.n);
      const double div = -omega_sq * nn * nn + om * om;
      if (std::abs(div) < ctx.divisor_floor) {
        std::ostringstream os;
        os << "tree_value: small divisor " << div << " at (n, m) = ("
           << ln.momentum.n << ", " << ln.momentum.m << ")";
        throw std::runtime_error(os.str());
      }
      val /= div;
    } else if (ln.momentum.n != 0) {
      if (ln.delta < 1 || ln.delta > 2)
        throw std::invalid_argument(
            "tree_value: polynomial line needs delta in {1, 2}");
      const Complex iq(0.0, static_cast<double>(ln.momentum.n));
      val /= (ln.delta == 2) ? iq * iq : iq;
    }
  }
  return val;
}

TreeSumResult tree_expansion_layers(int K, const TreeContext& ctx,
                                    int grid_n) {
  if (K < 1)
    throw std::invalid_argument("tree_expansion_layers: K must be >= 1");
  if (grid_n < 1)
    throw std::invalid_argument(
        "tree_expansion_layers: grid cutoff must be >= 1");
  if (ctx.gs == nullptr)
    throw std::invalid_argument("tree_expansion_layers: ground state missing");
  if (ctx.omega.N < grid_n)
    throw std::invalid_argument(
        "tree_expansion_layers: frequency table does not cover the grid");
  if (!(1.0 - ctx.epsilon > 0.0))
    throw std::invalid_argument(
        "tree_expansion_layers: epsilon must be < 1");
  const auto check_nu = [grid_n](const std::vector<double>& nu,
                                 const char* name) {
    if (!nu.empty() && static_cast<int>(nu.size()) < grid_n) {
      std::ostringstream os;
      os << "tree_expansion_layers: " << name
         << " must be empty or cover modes 1.." << grid_n;
      throw std::invalid_argument(os.str());
    }
  };
  check_nu(ctx.nu_a, "nu_a");
  check_nu(ctx.nu_b, "nu_b");

  const GroundState& gs = *ctx.gs;
  const double omega_sq = 1.0 - ctx.epsilon;

  TreeSumResult res;
  res.C.assign(static_cast<size_t>(K) + 1, 0.0);
  res.layers.reserve(static_cast<size_t>(K) + 1);

  FourierSeries2D u0(grid_n);
  install_diagonal_layer(u0, gs.a0, std::min(grid_n, gs.a0.N));
  res.layers.push_back(u0);

  for (int k = 1; k <= K; ++k) {
    // Off-diagonal branch join: one epsilon node over an order-(k-1)
    // triple, plus the counterterm reinsertions of the previous layer.
    const FourierSeries2D xw = triple_sum(res.layers, k - 1, grid_n);
    const FourierSeries2D& prev = res.layers[static_cast<size_t>(k - 1)];
    FourierSeries2D w(grid_n);
    for (int nn = 0; nn <= grid_n; ++nn) {
      for (int mm = 1; mm <= grid_n; ++mm) {
        if (nn == mm) continue;
        const double om = ctx.omega.at(mm);
        const double div =
            -omega_sq * static_cast<double>(nn) * static_cast<double>(nn) +
            om * om;
        if (std::abs(div) < ctx.divisor_floor) {
          std::ostringstream os;
          os << "tree_expansion_layers: small divisor " << div
             << " at (n, m) = (" << nn << ", " << mm
             << ") while forming order " << k;
          throw std::runtime_error(os.str());
        }
        const double na = ctx.nu_a.empty()
                              ? 0.0
                              : ctx.nu_a[static_cast<size_t>(mm - 1)];
        const double nb = ctx.nu_b.empty()
                              ? 0.0
                              : ctx.nu_b[static_cast<size_t>(mm - 1)];
        const Complex num = na * prev.coeff(nn, mm) +
                            nb * prev.coeff(nn, -mm) +
                            ctx.epsilon * xw.coeff(nn, mm);
        const Complex v = num / div;
        w.set_coeff(nn, mm, v);
        w.set_coeff(-nn, mm, v);
        w.set_coeff(nn, -mm, -v);
        w.set_coeff(-nn, -mm, -v);
      }
    }

    // Diagonal branch join: cubic nodes whose full-order slot holds the
    // off-diagonal layer just built, then the projected Green solve.
    std::vector<FourierSeries2D> ext = res.layers;
    ext.push_back(w);
    const FourierSeries2D xv = triple_sum(ext, k, grid_n);
    FourierSeries1D f(grid_n, Parity::kOdd);
    for (int nn = 1; nn <= grid_n; ++nn) {
      const Complex d = xv.coeff(nn, nn);
      f.set_coeff(nn, -d);
      f.set_coeff(-nn, d);
    }
    const AkResult ak = solve_Ak(gs, f);
    FourierSeries2D layer = w;
    install_diagonal_layer(layer, ak.A, std::min(grid_n, ak.A.N));
    res.layers.push_back(layer);
    res.C[static_cast<size_t>(k)] = ak.C;
  }
  return res;
}

bool check_counting_bounds(const Tree& t) {
  int v3 = 0, v1 = 0, w3 = 0, ep = 0;
  for (const TreeNode& nd : t.nodes) {
    if (nd.kind == NodeKind::kEndPoint) ++ep;
    if (nd.kind == NodeKind::kVNode && nd.s == 3) ++v3;
    if (nd.kind == NodeKind::kVNode && nd.s == 1) ++v1;
    if (nd.kind == NodeKind::kWNode && nd.s == 3) ++w3;
  }
  return v3 <= 2 * w3 + 2 * v1 && ep <= 2 * (v3 + w3) + 1;
}

bool check_branching_identity(const Tree& t) {
  int lhs = 0, ep = 0;
  for (const TreeNode& nd : t.nodes) {
    if (nd.kind == NodeKind::kEndPoint) {
      ++ep;
    } else {
      lhs += nd.s - 1;
    }
  }
  return lhs == ep - 1;
}

bool check_momentum_law(const Tree& t) {
  if (t.nodes.empty() || t.lines.empty()) return false;
  const int root = t.lines[static_cast<size_t>(t.root_line)].from;
  Mode d{0, 0};
  return recompute_and_check(t, root, d);
}

int mode_label_sum(const Tree& t) {
  int total = 0;
  for (const TreeNode& nd : t.nodes) {
    if (nd.kind == NodeKind::kEndPoint) total += std::abs(nd.first.n);
    if (nd.kind == NodeKind::kVNode)
      total += std::abs(nd.first.n) + std::abs(nd.second.n);
  }
  return total;
}

namespace {

void encode_node(const Tree& t, int id, std::ostringstream& os) {
  const TreeNode& nd = t.nodes[static_cast<size_t>(id)];
  const TreeLine& ln = t.lines[static_cast<size_t>(id)];
  os << '(' << kind_name(nd.kind) << nd.s;
  if (nd.kind == NodeKind::kVNode) {
    os << " j" << nd.j << " k" << nd.k_v << ' ' << nd.first.n << ','
       << nd.first.m << ';' << nd.second.n << ',' << nd.second.m;
  } else if (nd.kind == NodeKind::kEndPoint) {
    os << ' ' << nd.first.n << ',' << nd.first.m;
  } else if (nd.s == 1) {
    os << ' ' << (nd.nu_type ? nd.nu_type : '?');
  }
  os << '|' << (ln.badge == LineBadge::kW ? 'w' : 'v') << ln.momentum.n
     << ',' << ln.momentum.m << 'd' << ln.delta;
  for (int c : nd.children)
    encode_node(t, t.lines[static_cast<size_t>(c)].from, os);
  os << ')';
}

}  // namespace

std::string canonical_encoding(const Tree& t) {
  std::ostringstream os;
  os << 'k' << t.order << ':';
  encode_node(t, t.lines[static_cast<size_t>(t.root_line)].from, os);
  return os.str();
}

double chi_bump(double x, double C0) {
  if (!(C0 > 0.0) || C0 > 0.5)
    throw std::invalid_argument("chi_bump: C0 must lie in (0, 1/2]");
  const double ax = std::abs(x);
  if (ax <= C0) return 1.0;
  if (ax >= 2.0 * C0) return 0.0;
  const double t = (ax - C0) / C0;
  const double fall = std::exp(-1.0 / (1.0 - t));
  const double rise = std::exp(-1.0 / t);
  return fall / (rise + fall);
}

double chi_partition(double x, int h, double C0) {
  if (h < -1)
    throw std::invalid_argument("chi_partition: scale must be >= -1");
  if (h == -1) return 1.0 - chi_bump(x, C0);
  return chi_bump(std::ldexp(x, h), C0) - chi_bump(std::ldexp(x, h + 1), C0);
}

std::vector<ScaledTree> assign_scales(const Tree& t, const TreeContext& ctx,
                                      double C0) {
  if (!(C0 > 0.0) || C0 > 0.5)
    throw std::invalid_argument("assign_scales: C0 must lie in (0, 1/2]");
  if (!(1.0 - ctx.epsilon > 0.0))
    throw std::invalid_argument("assign_scales: epsilon must be < 1");
  const double omega = std::sqrt(1.0 - ctx.epsilon);

  // Per-line scale candidates: polynomial and end-point lines sit at -1;
  // small-divisor lines range over the at most two bumps that are
  // nonzero at x = |omega n| - omega_t(m).
  std::vector<std::vector<std::pair<int, double>>> cands(t.lines.size());
  for (const TreeLine& ln : t.lines) {
    auto& c = cands[static_cast<size_t>(ln.id)];
    if (ln.badge == LineBadge::kV) {
      c.push_back({-1, 1.0});
      continue;
    }
    const double x =
        std::abs(omega * static_cast<double>(ln.momentum.n)) -
        freq_at(ctx, ln.momentum.m);
    if (x == 0.0) {
      std::ostringstream os;
      os << "assign_scales: exact resonance at (n, m) = (" << ln.momentum.n
         << ", " << ln.momentum.m << ")";
      throw std::runtime_error(os.str());
    }
    const double w_low = chi_partition(x, -1, C0);
    if (w_low > 0.0) c.push_back({-1, w_low});
    const double ax = std::abs(x);
    if (ax < 2.0 * C0) {
      const double lg = std::log2(C0 / ax);
      const int h_lo = std::max(0, static_cast<int>(std::floor(lg)) - 1);
      for (int h = h_lo; h <= h_lo + 3; ++h) {
        const double w = chi_partition(x, h, C0);
        if (w > 0.0) c.push_back({h, w});
      }
    }
    if (c.empty())
      throw std::runtime_error("assign_scales: no admissible scale");
  }

  std::vector<ScaledTree> out;
  std::vector<size_t> pick(t.lines.size(), 0);
  for (;;) {
    ScaledTree st;
    st.base = t;
    st.scales.assign(t.lines.size(), -1);
    st.chi_weight = 1.0;
    for (size_t li = 0; li < t.lines.size(); ++li) {
      const auto& cp = cands[li][pick[li]];
      st.scales[li] = cp.first;
      if (t.lines[li].badge == LineBadge::kW) st.chi_weight *= cp.second;
    }
    out.push_back(std::move(st));
    size_t li = 0;
    while (li < t.lines.size()) {
      if (++pick[li] < cands[li].size()) break;
      pick[li] = 0;
      ++li;
    }
    if (li == t.lines.size()) break;
  }
  return out;
}

ScaledTree find_clusters_and_resonances(ScaledTree st) {
  st.clusters.clear();
  const Tree& t = st.base;
  const int n_nodes = static_cast<int>(t.nodes.size());

  std::set<int> level_set;
  for (const TreeLine& ln : t.lines)
    if (ln.to != -1) level_set.insert(st.scales[static_cast<size_t>(ln.id)]);

  Dsu dsu(n_nodes);
  std::set<std::vector<int>> seen;
  for (int level : level_set) {
    for (const TreeLine& ln : t.lines) {
      if (ln.to == -1) continue;
      if (st.scales[static_cast<size_t>(ln.id)] == level)
        dsu.unite(ln.from, ln.to);
    }
    std::map<int, std::vector<int>> comps;
    for (int id = 0; id < n_nodes; ++id) comps[dsu.find(id)].push_back(id);
    for (const auto& [root, nodes] : comps) {
      (void)root;
      std::vector<char> inside(static_cast<size_t>(n_nodes), 0);
      for (int id : nodes) inside[static_cast<size_t>(id)] = 1;
      std::vector<int> internal;
      for (const TreeLine& ln : t.lines)
        if (ln.to != -1 && inside[static_cast<size_t>(ln.from)] &&
            inside[static_cast<size_t>(ln.to)])
          internal.push_back(ln.id);
      if (internal.empty()) continue;
      if (!seen.insert(nodes).second) continue;

      Cluster cl;
      cl.nodes = nodes;
      cl.lines = internal;
      cl.h_T = -1;
      for (int id : internal)
        cl.h_T = std::max(cl.h_T, st.scales[static_cast<size_t>(id)]);
      const TreeLine* incoming = nullptr;
      const TreeLine* outgoing = nullptr;
      int n_in = 0;
      for (const TreeLine& ln : t.lines) {
        const bool fin = inside[static_cast<size_t>(ln.from)] != 0;
        const bool tin =
            ln.to != -1 && inside[static_cast<size_t>(ln.to)] != 0;
        if (fin == tin) continue;
        cl.external.push_back(ln.id);
        if (tin) {
          ++n_in;
          incoming = &ln;
        } else {
          outgoing = &ln;
        }
      }
      cl.h_ext = std::numeric_limits<int>::max();
      for (int id : cl.external)
        cl.h_ext = std::min(cl.h_ext, st.scales[static_cast<size_t>(id)]);
      for (int id : nodes) {
        const TreeNode& nd = t.nodes[static_cast<size_t>(id)];
        if (nd.kind == NodeKind::kWNode) ++cl.k_T;
        if (nd.kind == NodeKind::kVNode && nd.s == 1) cl.k_T += nd.k_v;
        cl.n_T += nd.first.n + nd.second.n;
        cl.m_T += nd.first.m + nd.second.m;
      }
      if (n_in == 1 && incoming != nullptr && outgoing != nullptr &&
          incoming->momentum.n == outgoing->momentum.n &&
          std::abs(incoming->momentum.m) == std::abs(outgoing->momentum.m)) {
        cl.is_self_energy = true;
        cl.resonance_type =
            (incoming->momentum.m == outgoing->momentum.m) ? 'a' : 'b';
      }
      st.clusters.push_back(std::move(cl));
    }
  }
  return st;
}

ScaleCounts count_scales(const ScaledTree& st, int h) {
  ScaleCounts sc;
  for (size_t li = 0; li < st.scales.size(); ++li)
    if (st.scales[li] == h) ++sc.N_h;
  for (const Cluster& cl : st.clusters) {
    if (cl.h_T == h) ++sc.C_h;
    if (cl.is_self_energy && cl.h_ext == h) ++sc.S_h;
  }
  for (const TreeNode& nd : st.base.nodes) {
    if (nd.kind != NodeKind::kWNode || nd.s != 1) continue;
    const int child = nd.children.front();
    const int h_child = st.scales[static_cast<size_t>(child)];
    const int h_exit = st.scales[static_cast<size_t>(nd.id)];
    if (std::max(h_child, h_exit) == h) ++sc.M_h;
  }
  return sc;
}

int self_energy_census(int k_T) {
  if (k_T != 1)
    throw std::invalid_argument(
        "self_energy_census: only order 1 is enumerated");
  // An order-1 self-energy subgraph heads with its single epsilon node:
  // a diagonal node on top would hand the subgraph an exiting polynomial
  // line, which always sits at the minimal scale and so can never leave
  // the cluster. Below the epsilon node the entering line either takes
  // one of the three slots directly (the others hold end-points), or one
  // slot holds a diagonal kernel node whose own three slots host the
  // entering line (a diagonal node fed by end-points alone is excluded
  // by the branch filter, and counterterm vertices already cost order
  // one plus an off-diagonal child of order at least one).
  int count = 0;
  for (int slot_in = 0; slot_in < 3; ++slot_in) ++count;
  for (int slot_sub = 0; slot_sub < 3; ++slot_sub)
    for (int slot_in = 0; slot_in < 3; ++slot_in) ++count;
  return count;
}

namespace {

std::string node_dot_label(const TreeNode& nd) {
  std::ostringstream os;
  switch (nd.kind) {
    case NodeKind::kEndPoint:
      os << "e (" << nd.first.n << "," << nd.first.m << ")";
      break;
    case NodeKind::kVNode:
      os << "v" << nd.s;
      if (nd.s == 1) os << " k=" << nd.k_v;
      os << " j=" << nd.j << " (" << nd.first.n << "," << nd.first.m
         << ")(" << nd.second.n << "," << nd.second.m << ")";
      break;
    case NodeKind::kWNode:
      if (nd.s == 3) {
        os << "w3 eps";
      } else {
        os << "nu " << (nd.nu_type ? nd.nu_type : '?');
      }
      break;
  }
  return os.str();
}

std::string dot_body(const Tree& t, const std::vector<int>* scales) {
  std::ostringstream os;
  os << "  rankdir=BT;\n  out [shape=point];\n";
  for (const TreeNode& nd : t.nodes) {
    const char* shape = "box";
    if (nd.kind == NodeKind::kEndPoint) shape = "circle";
    if (nd.kind == NodeKind::kWNode) shape = "diamond";
    os << "  n" << nd.id << " [shape=" << shape << ", label=\""
       << node_dot_label(nd) << "\"];\n";
  }
  for (const TreeLine& ln : t.lines) {
    os << "  n" << ln.from << " -> ";
    if (ln.to == -1) {
      os << "out";
    } else {
      os << "n" << ln.to;
    }
    os << " [label=\"" << (ln.badge == LineBadge::kW ? 'w' : 'v') << " ("
       << ln.momentum.n << "," << ln.momentum.m << ")";
    if (ln.badge == LineBadge::kV && ln.momentum.n != 0)
      os << " d" << ln.delta;
    if (scales != nullptr)
      os << " h=" << (*scales)[static_cast<size_t>(ln.id)];
    os << "\"];\n";
  }
  return os.str();
}

}  // namespace

std::string to_dot(const Tree& t) {
  std::ostringstream os;
  os << "digraph tree {\n" << dot_body(t, nullptr) << "}\n";
  return os.str();
}

std::string to_dot(const ScaledTree& st) {
  std::ostringstream os;
  os << "digraph tree {\n" << dot_body(st.base, &st.scales);
  for (size_t ci = 0; ci < st.clusters.size(); ++ci) {
    const Cluster& cl = st.clusters[ci];
    os << "  // cluster " << ci << ": h_T=" << cl.h_T << " k_T=" << cl.k_T
       << " nodes=[";
    for (size_t i = 0; i < cl.nodes.size(); ++i) {
      if (i > 0) os << ' ';
      os << cl.nodes[i];
    }
    os << "]";
    if (cl.is_self_energy) os << " self-energy type=" << cl.resonance_type;
    os << "\n";
  }
  os << "}\n";
  return os.str();
}

std::string trees_to_json(const std::vector<Tree>& ts) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Tree& t : ts) {
    nlohmann::json jt;
    jt["order"] = t.order;
    jt["root_line"] = t.root_line;
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& nd : t.nodes) {
      nlohmann::json jn;
      jn["id"] = nd.id;
      jn["kind"] = kind_name(nd.kind);
      jn["s"] = nd.s;
      jn["j"] = nd.j;
      jn["k_v"] = nd.k_v;
      jn["nu"] = nd.nu_type ? std::string(1, nd.nu_type) : std::string();
      jn["first"] = {nd.first.n, nd.first.m};
      jn["second"] = {nd.second.n, nd.second.m};
      jn["children"] = nd.children;
      nodes.push_back(jn);
    }
    jt["nodes"] = nodes;
    nlohmann::json lines = nlohmann::json::array();
    for (const TreeLine& ln : t.lines) {
      nlohmann::json jl;
      jl["id"] = ln.id;
      jl["from"] = ln.from;
      jl["to"] = ln.to;
      jl["badge"] = (ln.badge == LineBadge::kW) ? "w" : "v";
      jl["delta"] = ln.delta;
      jl["momentum"] = {ln.momentum.n, ln.momentum.m};
      lines.push_back(jl);
    }
    jt["lines"] = lines;
    arr.push_back(jt);
  }
  return arr.dump(2);
}

}  // namespace rwave
