#include "rwave/lindstedt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "rwave/json_io.hpp"
#include "rwave/parallel.hpp"

namespace rwave {

namespace {

bool is_zero(const FourierSeries2D& u) {
  for (const auto& c : u.coeffs)
    if (c != Complex(0.0, 0.0)) return false;
  return true;
}

double max_abs(const FourierSeries2D& u) {
  double m = 0.0;
  for (const auto& c : u.coeffs) m = std::max(m, std::abs(c));
  return m;
}

// Cost of one truncated convolution, in coefficient-pair operations.
long long conv_cost(const FourierSeries2D& a, const FourierSeries2D& b,
                    int n_out) {
  const long long side_out = 2LL * n_out + 1;
  const long long side_in = 2LL * std::min(a.N, b.N) + 1;
  return side_out * side_out * side_in * side_in;
}

// s-fold convolution power of the expansion, graded by order: the sum over
// (k_1, ..., k_s) with k_i >= 0 and sum k_i = target of
// layers[k_1] * ... * layers[k_s].  Orders above layers.size() - 1 do not
// exist yet and are treated as absent splits.
//
// Intermediate products after j factors are kept up to mode
// min(j, s - j + 1) * n_base.  A stage-j mode with |index| above
// (s - j + 1) * n_base cannot fall back inside the final window |.| <= n_base
// after convolving with s - j more factors of width n_base, so this
// truncation loses nothing: every retained output coefficient is the exact
// untruncated sum.
FourierSeries2D graded_power(const std::vector<const FourierSeries2D*>& layers,
                             int s, int target, int n_base, long long budget,
                             long long& spent) {
  const int avail = static_cast<int>(layers.size()) - 1;
  std::vector<FourierSeries2D> cur(target + 1);
  std::vector<char> cur_set(target + 1, 0);
  for (int t = 0; t <= std::min(target, avail); ++t) {
    if (is_zero(*layers[t])) continue;
    cur[t] = *layers[t];
    cur_set[t] = 1;
  }
  for (int j = 2; j <= s; ++j) {
    const int cut = std::min(j, s - j + 1) * n_base;
    std::vector<FourierSeries2D> next(target + 1);
    std::vector<char> next_set(target + 1, 0);
    for (int t = 0; t <= target; ++t) {
      FourierSeries2D acc;
      bool have = false;
      for (int tp = 0; tp <= std::min(t, avail); ++tp) {
        const int rest = t - tp;
        if (!cur_set[rest] || is_zero(*layers[tp])) continue;
        spent += conv_cost(cur[rest], *layers[tp], cut);
        if (spent > budget) {
          throw std::runtime_error(
              "expansion term budget exceeded; raise term_budget or lower "
              "K/N/phi degree");
        }
        FourierSeries2D piece = conv2d(cur[rest], *layers[tp], cut);
        if (!have) {
          acc = std::move(piece);
          have = true;
        } else {
          acc = add(acc, piece);
        }
      }
      if (have) {
        next[t] = std::move(acc);
        next_set[t] = 1;
      }
    }
    cur = std::move(next);
    cur_set = std::move(next_set);
  }
  if (!cur_set[target]) return FourierSeries2D(n_base);
  return cur[target];
}

// Weighted sum over the odd powers of the nonlinearity.  For the block with
// 2k'+1 factors the graded order is target_of(k') (blocks whose target is
// negative cannot contribute and are skipped) and the scalar weight is
// weights[k'-1].  The weights already contain the normalized coefficient and
// any power of epsilon.
FourierSeries2D assemble_nonlin(const std::vector<const FourierSeries2D*>& layers,
                                const std::vector<double>& weights,
                                const std::function<int(int)>& target_of,
                                int n_base, long long budget,
                                long long& spent) {
  FourierSeries2D out(n_base);
  for (int kp = 1; kp <= static_cast<int>(weights.size()); ++kp) {
    const double w = weights[kp - 1];
    if (w == 0.0) continue;
    const int t = target_of(kp);
    if (t < 0) continue;
    FourierSeries2D block =
        graded_power(layers, 2 * kp + 1, t, n_base, budget, spent);
    out = add(out, scale(block, Complex(w, 0.0)));
  }
  return out;
}

// Block weights of the recursion: phi_hat_sub[k'-1] * eps^{k'-1}.  The
// overall eps of the off-diagonal rows is applied by the caller.
std::vector<double> recursion_weights(const ExpansionState& st) {
  std::vector<double> w(st.phi_hat_sub.size());
  for (size_t i = 0; i < w.size(); ++i)
    w[i] = st.phi_hat_sub[i] *
           std::pow(st.config.epsilon, static_cast<int>(i));
  return w;
}

std::vector<const FourierSeries2D*> first_orders(const ExpansionState& st,
                                                 int count) {
  std::vector<const FourierSeries2D*> v;
  v.reserve(count);
  for (int t = 0; t < count; ++t) v.push_back(&st.orders[t]);
  return v;
}

void require_orders_below(const ExpansionState& st, int k,
                          const char* caller) {
  if (static_cast<int>(st.orders.size()) >= k) return;
  std::ostringstream os;
  os << caller << ": order " << k << " needs layers 0.." << k - 1
     << " but only " << st.orders.size() << " are present";
  throw std::runtime_error(os.str());
}

// Off-diagonal solve shared by w_k and advance_order; `spent` carries the
// running term budget across the w and f assemblies of one order.
FourierSeries2D w_k_impl(const ExpansionState& st, int k, long long& spent) {
  if (k < 1) throw std::invalid_argument("w_k: k must be >= 1");
  require_orders_below(st, k, "w_k");
  const ExpansionConfig& cfg = st.config;
  const int n_sub = st.sub_N;
  const auto target = [k](int kp) { return kp == 1 ? k - 1 : k - 1 - kp; };
  const FourierSeries2D nl =
      assemble_nonlin(first_orders(st, k), recursion_weights(st), target,
                      n_sub, cfg.term_budget, spent);
  const FourierSeries2D& prev = st.orders[k - 1];
  const double omega_sq = 1.0 - cfg.epsilon;
  FourierSeries2D w(n_sub);
  for (int n = 0; n <= n_sub; ++n) {
    for (int m = 1; m <= n_sub; ++m) {
      if (n == m) continue;
      const double om = st.sub_omega[m - 1];
      const double div = -omega_sq * n * n + om * om;
      if (std::abs(div) < cfg.divisor_floor) {
        std::ostringstream os;
        os << "small divisor " << div << " at (n, m) = (" << n << ", " << m
           << ") while forming order " << k;
        throw std::runtime_error(os.str());
      }
      const Complex num = st.sub_nu_a[m - 1] * prev.coeff(n, m) +
                          st.sub_nu_b[m - 1] * prev.coeff(n, -m) +
                          cfg.epsilon * nl.coeff(n, m);
      const Complex val = num / div;
      w.set_coeff(n, m, val);
      w.set_coeff(-n, m, val);
      w.set_coeff(n, -m, -val);
      w.set_coeff(-n, -m, -val);
    }
  }
  return w;
}

// Forcing for the order-k profile correction.  `installed` supplies the
// order-k off-diagonal layer when it is already stored (its diagonal is
// zeroed here, so passing the completed layer is also fine).
FourierSeries1D f_k_impl(const ExpansionState& st, int k, long long& spent) {
  if (k < 1) throw std::invalid_argument("f_k: k must be >= 1");
  require_orders_below(st, k, "f_k");
  const int n_sub = st.sub_N;
  FourierSeries2D w_only;
  if (static_cast<int>(st.orders.size()) > k) {
    w_only = st.orders[k];
    for (int n = -n_sub; n <= n_sub; ++n) {
      w_only.set_coeff(n, n, Complex(0.0, 0.0));
      w_only.set_coeff(n, -n, Complex(0.0, 0.0));
    }
  } else {
    w_only = w_k_impl(st, k, spent);
  }
  std::vector<const FourierSeries2D*> layers = first_orders(st, k);
  layers.push_back(&w_only);
  const auto target = [k](int kp) { return kp == 1 ? k : k - kp; };
  const FourierSeries2D nl =
      assemble_nonlin(layers, recursion_weights(st), target, n_sub,
                      st.config.term_budget, spent);
  // Splits made purely of diagonal layers of orders < k cancel between the
  // (n, n) and (n, -n) rows and are excluded from the forcing.  Because the
  // order-k slot above holds only the off-diagonal part, every split of
  // total order k that survives here contains at least one such factor,
  // which is exactly the admissible set.
  FourierSeries1D f(n_sub, Parity::kOdd);
  for (int n = 1; n <= n_sub; ++n) {
    const Complex d = nl.coeff(n, n);
    f.set_coeff(n, -d);
    f.set_coeff(-n, d);
  }
  return f;
}

void install_diagonal(FourierSeries2D& layer, const FourierSeries1D& a,
                      int n_sub) {
  for (int n = 1; n <= n_sub; ++n) {
    const Complex c = a.coeff(n);
    layer.set_coeff(n, n, c);
    layer.set_coeff(-n, n, c);
    layer.set_coeff(n, -n, -c);
    layer.set_coeff(-n, -n, -c);
  }
}

}  // namespace

ExpansionState init_expansion(const ExpansionConfig& cfg,
                              const FrequencyTable& omega_t,
                              const std::vector<double>& nu_a,
                              const std::vector<double>& nu_b) {
  if (cfg.K < 1) throw std::invalid_argument("init_expansion: K must be >= 1");
  if (cfg.N < 1) throw std::invalid_argument("init_expansion: N must be >= 1");
  if (cfg.j < 1) throw std::invalid_argument("init_expansion: j must be >= 1");
  if (!(cfg.epsilon >= 0.0))
    throw std::invalid_argument("init_expansion: epsilon must be >= 0");
  if (cfg.phi.empty() || cfg.phi[0] <= 0.0) {
    throw std::invalid_argument(
        "init_expansion: the cubic coefficient phi[0] must be positive; the "
        "expansion is built on the branch with frequencies below the linear "
        "spectrum, which requires a positive leading coefficient");
  }
  if (cfg.divisor_floor <= 0.0)
    throw std::invalid_argument("init_expansion: divisor_floor must be > 0");
  if (omega_t.N < cfg.N)
    throw std::invalid_argument(
        "init_expansion: frequency table shorter than the cutoff");
  const int n_sub = cfg.N / cfg.j;
  if (n_sub < 16) {
    throw std::invalid_argument(
        "init_expansion: N / j must be at least 16 to resolve the profile");
  }
  const auto take = [&](const std::vector<double>& nu,
                        const char* name) -> std::vector<double> {
    if (nu.empty()) return std::vector<double>(cfg.N, 0.0);
    if (static_cast<int>(nu.size()) < cfg.N) {
      throw std::invalid_argument(std::string("init_expansion: ") + name +
                                  " shorter than the cutoff");
    }
    return std::vector<double>(nu.begin(), nu.begin() + cfg.N);
  };

  ExpansionState st;
  st.config = cfg;
  st.omega_t = omega_t;
  st.nu_a = take(nu_a, "nu_a");
  st.nu_b = take(nu_b, "nu_b");
  st.sub_N = n_sub;

  const int deg = static_cast<int>(cfg.phi.size());
  st.phi_hat.resize(deg);
  st.phi_hat_sub.resize(deg);
  for (int kp = 1; kp <= deg; ++kp) {
    st.phi_hat[kp - 1] = cfg.phi[kp - 1] / std::pow(cfg.phi[0], kp);
    st.phi_hat_sub[kp - 1] =
        st.phi_hat[kp - 1] * std::pow(static_cast<double>(cfg.j), 2 * (kp - 1));
  }

  st.sub_omega.resize(n_sub);
  st.sub_nu_a.resize(n_sub);
  st.sub_nu_b.resize(n_sub);
  const double jsq = static_cast<double>(cfg.j) * cfg.j;
  for (int m = 1; m <= n_sub; ++m) {
    const double om = omega_t.at(cfg.j * m) / cfg.j;
    if (!(om > 0.0))
      throw std::invalid_argument("init_expansion: frequencies must be > 0");
    st.sub_omega[m - 1] = om;
    st.sub_nu_a[m - 1] = st.nu_a[cfg.j * m - 1] / jsq;
    st.sub_nu_b[m - 1] = st.nu_b[cfg.j * m - 1] / jsq;
  }

  st.gs = build_ground_state(n_sub);

  FourierSeries2D u0(n_sub);
  install_diagonal(u0, st.gs.a0, n_sub);
  st.orders.push_back(std::move(u0));
  st.A.push_back(st.gs.a0);
  st.C.push_back(0.0);
  return st;
}

FourierSeries2D w_k(const ExpansionState& st, int k) {
  long long spent = 0;
  return w_k_impl(st, k, spent);
}

FourierSeries1D f_k(const ExpansionState& st, int k) {
  long long spent = 0;
  return f_k_impl(st, k, spent);
}

void advance_order(ExpansionState& st, int k) {
  if (k != static_cast<int>(st.orders.size())) {
    std::ostringstream os;
    os << "advance_order: expected next order " << st.orders.size()
       << ", got " << k;
    throw std::invalid_argument(os.str());
  }
  if (k > st.config.K)
    throw std::invalid_argument("advance_order: k exceeds configured K");
  long long spent = 0;
  st.orders.push_back(w_k_impl(st, k, spent));
  FourierSeries1D f;
  try {
    f = f_k_impl(st, k, spent);
  } catch (...) {
    st.orders.pop_back();
    throw;
  }
  AkResult ak = solve_Ak(st.gs, f);
  install_diagonal(st.orders.back(), ak.A, st.sub_N);
  if (dirichlet_defect(st.orders.back()) != 0.0) {
    st.orders.pop_back();
    throw std::logic_error("advance_order: symmetry relations broken");
  }
  st.A.push_back(std::move(ak.A));
  st.C.push_back(ak.C);
}

FourierSeries2D physical_layer(const ExpansionState& st, int k) {
  if (k < 0 || k >= static_cast<int>(st.orders.size()))
    throw std::out_of_range("physical_layer: order not computed");
  if (st.config.j == 1) return st.orders[k];
  const int j = st.config.j;
  FourierSeries2D out(st.config.N);
  for (int n = -st.sub_N; n <= st.sub_N; ++n) {
    for (int m = -st.sub_N; m <= st.sub_N; ++m) {
      const Complex c = st.orders[k].coeff(n, m);
      if (c != Complex(0.0, 0.0))
        out.set_coeff(j * n, j * m, static_cast<double>(j) * c);
    }
  }
  return out;
}

EvalResult evaluate_and_residual(const ExpansionState& st, double mu) {
  const ExpansionConfig& cfg = st.config;
  const int n_full = cfg.N;
  FourierSeries2D u(n_full);
  double mu_k = 1.0;
  for (int k = 0; k < static_cast<int>(st.orders.size()); ++k) {
    u = add(u, scale(physical_layer(st, k), Complex(mu_k, 0.0)));
    mu_k *= mu;
  }

  std::vector<double> weights(st.phi_hat.size());
  for (size_t i = 0; i < weights.size(); ++i)
    weights[i] = st.phi_hat[i] * std::pow(cfg.epsilon, static_cast<int>(i));
  long long spent = 0;
  const std::vector<const FourierSeries2D*> layers = {&u};
  const FourierSeries2D nl = assemble_nonlin(
      layers, weights, [](int) { return 0; }, n_full, cfg.term_budget, spent);

  EvalResult res;
  res.u = u;
  const double omega_sq = 1.0 - cfg.epsilon;
  for (int n = -n_full; n <= n_full; ++n) {
    const double nsq = static_cast<double>(n) * n;
    res.q_defect = std::max(
        res.q_defect, std::abs(nsq * u.coeff(n, n) - nl.coeff(n, n)));
    res.q_defect = std::max(
        res.q_defect, std::abs(-nsq * u.coeff(n, n) - nl.coeff(n, -n)));
    for (int m = -n_full; m <= n_full; ++m) {
      if (m == 0) {
        res.p_defect = std::max(res.p_defect, std::abs(u.coeff(n, 0)));
        continue;
      }
      if (std::abs(n) == std::abs(m)) continue;
      const double om = st.omega_t.at(m);
      const double div = -omega_sq * nsq + om * om;
      const Complex row = div * u.coeff(n, m) -
                          mu * (st.nu_a[std::abs(m) - 1] * u.coeff(n, m) +
                                st.nu_b[std::abs(m) - 1] * u.coeff(n, -m)) -
                          mu * cfg.epsilon * nl.coeff(n, m);
      res.p_defect = std::max(res.p_defect, std::abs(row));
    }
  }
  res.residual = std::max(res.q_defect, res.p_defect);
  return res;
}

std::vector<GrowthRow> growth_diagnostic(const ExpansionConfig& cfg) {
  if (cfg.K > 10)
    throw std::invalid_argument("growth_diagnostic: K must be <= 10");
  std::vector<GrowthRow> rows;
  ExpansionState st =
      init_expansion(cfg, flat_frequencies(cfg.N, cfg.epsilon), {}, {});
  double prev = max_abs(st.orders[0]);
  rows.push_back({0, prev, 0.0, false});
  for (int k = 1; k <= cfg.K; ++k) {
    try {
      advance_order(st, k);
    } catch (const std::runtime_error&) {
      rows.push_back({k, 0.0, 0.0, true});
      break;
    }
    const double cur = max_abs(st.orders[k]);
    rows.push_back({k, cur, prev > 0.0 ? cur / prev : 0.0, false});
    prev = cur;
  }
  return rows;
}

std::string growth_csv(const std::vector<GrowthRow>& rows) {
  std::ostringstream os;
  os << "k,max_abs,ratio,divisor_hit\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%d\n", r.k, r.max_abs,
                  r.ratio, r.divisor_hit ? 1 : 0);
    os << buf;
  }
  return os.str();
}

std::string expansion_to_json(const ExpansionState& st) {
  nlohmann::json j;
  j["config"] = {{"K", st.config.K},
                 {"N", st.config.N},
                 {"epsilon", st.config.epsilon},
                 {"j", st.config.j},
                 {"phi", st.config.phi},
                 {"mu", st.config.mu}};
  j["omega"] = st.omega_t.omega;
  j["nu_a"] = st.nu_a;
  j["nu_b"] = st.nu_b;
  j["C"] = st.C;
  nlohmann::json amps = nlohmann::json::array();
  for (const auto& a : st.A) amps.push_back(nlohmann::json::parse(to_json(a)));
  j["A"] = std::move(amps);
  nlohmann::json layers = nlohmann::json::array();
  for (int k = 0; k < static_cast<int>(st.orders.size()); ++k)
    layers.push_back(nlohmann::json::parse(to_json(physical_layer(st, k))));
  j["orders"] = std::move(layers);
  return j.dump(2);
}

}  // namespace rwave
