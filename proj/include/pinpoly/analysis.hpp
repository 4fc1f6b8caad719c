#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "chain.hpp"
#include "effective.hpp"
#include "equilibrium.hpp"
#include "rng.hpp"
#include "simulate.hpp"
#include "spectral.hpp"
#include "stats.hpp"

namespace pinpoly {

inline constexpr double g_zero_tol = 1e-10;

// ---------------------------------------------------------------------------
// Partition-function identities.

// max_j |2 Z^{+,lambda}_j - Z^{lambda/2}_j| / Z^{lambda/2}_j over even 2 <= j <= max_len.
inline double reflection_identity_error(int max_len, double lambda) {
  const auto a = partition_functions<double>(max_len, lambda);
  const auto b = partition_functions<double>(max_len, lambda / 2);
  double e = 0;
  for (int j = 2; j <= max_len; j += 2) e = std::max(e, std::fabs(2 * a.w_wall[j] - b.w_free[j]) / b.w_free[j]);
  return e;
}

inline TailFit kernel_tail(double lambda, int j_min = 200, int j_max = 2000) {
  return tail_fit(make_kernel<double>(j_max, lambda), j_min, j_max);
}

struct OracleReport {
  long compared = 0;
  long mismatches = 0;
  std::vector<std::string> failures;  // first few

  void compare(const rational& closed, const rational& brute, const std::string& what) {
    ++compared;
    if (closed == brute) return;
    ++mismatches;
    if (failures.size() < 10) failures.push_back(what);
  }
};

// Closed-form equilibrium quantities against full enumeration, in exact
// arithmetic: pi_marginals, nu(sigma) (free and capped), mu(n) and nu_n.
inline OracleReport oracle_equivalence(int L, const rational& lambda) {
  OracleReport rep;
  const int N = 1 << L;
  rational Z = 0;
  std::vector<rational> zero_at(2 * L + 1), zeros_law(L), chi_law(L);
  std::vector<rational> plus(L + 2), omega_o(L + 1);
  std::vector<std::vector<rational>> sigma(L + 1, std::vector<rational>(N));  // [cap][bits], cap L = free
  std::vector<rational> mu(L);  // chi law given sigma at the leftmost site is +
  std::map<std::vector<int>, rational> configs;
  for (const auto& p : enumerate_paths(L)) {
    const auto st = path_stats(p);
    const rational w = power(lambda, st.zeros);
    Z += w;
    for (int q = 1; q < 2 * L; ++q)
      if (p.at(q) == 0) zero_at[q] += w;
    zeros_law[st.zeros] += w;
    chi_law[st.crossings] += w;
    for (int ell = 1; ell <= L + 1; ++ell)
      if (in_window_sign(p, ell, 1)) plus[ell] += w;
    for (int cap = 0; cap <= L; ++cap)
      if (in_omega_o(st, cap)) {
        omega_o[cap] += w;
        sigma[cap][st.sigma.bits()] += w;
      }
    if (st.sigma.sign[0] > 0) mu[st.crossings] += w;
    configs[st.xi.xi] += w;
  }
  const std::string at = " (L=" + std::to_string(L) + ", lambda=" + lambda.str() + ")";

  for (int ell = 1; ell <= L + 1; ++ell) {
    const int cap = ell - 1;
    const auto m = pi_marginals<rational>(L, lambda, ell, cap);
    if (ell == 1) {
      for (int q = 1; q < 2 * L; ++q) rep.compare(m.zero_at[q], zero_at[q] / Z, "zero_at x=" + std::to_string(q - L) + at);
      for (int k = 0; k < L; ++k) rep.compare(m.zeros_law[k], zeros_law[k] / Z, "zeros_law k=" + std::to_string(k) + at);
      for (int n = 0; n < L; ++n) rep.compare(m.crossing_law[n], chi_law[n] / Z, "crossing_law n=" + std::to_string(n) + at);
    }
    rep.compare(m.omega_plus, plus[ell] / Z, "omega_plus ell=" + std::to_string(ell) + at);
    rep.compare(m.omega_o, omega_o[cap] / Z, "omega_o cap=" + std::to_string(cap) + at);
  }

  for (int cap = 0; cap <= L; ++cap) {
    std::optional<int> c;
    if (cap < L) c = cap;
    SigmaModel<rational> model(L, lambda, c);
    std::vector<rational> w(N);
    rational z = 0, zb = 0;
    for (int b = 0; b < N; ++b) {
      w[b] = model.weight(SignField::from_bits(L, b));
      z += w[b];
      zb += sigma[cap][b];
    }
    for (int b = 0; b < N; ++b)
      rep.compare(w[b] / z, sigma[cap][b] / zb, "nu(sigma) bits=" + std::to_string(b) + " cap=" + std::to_string(cap) + at);
    if (cap == L) {
      std::vector<rational> mc(L);
      rational zm = 0, zmu = 0;
      for (int b = 0; b < N; ++b)
        if (b & 1) {
          mc[crossings_of(SignField::from_bits(L, b)).n()] += w[b];
          zm += w[b];
        }
      for (int n = 0; n < L; ++n) zmu += mu[n];
      for (int n = 0; n < L; ++n) rep.compare(mc[n] / zm, mu[n] / zmu, "mu n=" + std::to_string(n) + at);
    }
  }

  const auto ker = make_kernel<rational>(2 * L, lambda);
  for (int n = 0; n < L; ++n) {
    CrossingLaw<rational> law(n, L, ker);
    rational total = 0;
    for (const auto& [xi, w] : configs) {
      if (static_cast<int>(xi.size()) != n) continue;
      const rational p = law.prob({L, xi});
      total += p;
      rep.compare(p, w / chi_law[n], "nu_n n=" + std::to_string(n) + at);
    }
    rep.compare(total, rational(1), "nu_n support n=" + std::to_string(n) + at);
  }
  return rep;
}

// The crossing-count chain's stationary law (double) against the exact
// conditional law of chi given a + sign at the left end; max relative error.
inline double crossing_count_mu_error(int L, const rational& lambda) {
  SigmaModel<rational> model(L, lambda);
  const int N = 1 << L;
  std::vector<rational> mc(L);
  rational z = 0;
  for (int b = 1; b < N; b += 2) {
    const auto s = SignField::from_bits(L, b);
    const rational w = model.weight(s);
    mc[crossings_of(s).n()] += w;
    z += w;
  }
  const auto cc = crossing_count_chain(L, static_cast<double>(lambda), L - 1);
  double e = 0;
  for (int n = 0; n < static_cast<int>(cc.mu.size()); ++n) {
    const double exact = static_cast<double>(mc[n] / z);
    e = std::max(e, std::fabs(cc.mu[n] - exact) / exact);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Spectral suite on the full polymer chain.

struct SpectralSuite {
  int L = 0;
  double lambda = 0;
  int states = 0;
  bool dense = false;
  double db_error = 0;
  double row_error = 0;
  double gap = 0;
  double t_rel = 0;
  double residual = 0;
  double antisym_error = 0;
  double mono_violation = 0;  // max g(eta) - g(eta') over covering pairs eta <= eta'
  double pi_min = 0;
  double t_mix = 0;           // delta = 1/(2e), worst of the two extremal starts
  double sandwich_hi = 0;     // (1 - log pi_min) T_rel
  bool sandwich = false;
  double submult_excess = 0;  // max d(t+s) - d(t) d(s) over the grid
  double pair_bound_excess = 0;   // max ||nu^a_t - nu^b_t|| - 4L^2 d(t)
  double decay_rel_error = std::numeric_limits<double>::quiet_NaN();  // -(1/t) log d(t) at t = 20 T_rel
  double decay_rate_error = std::numeric_limits<double>::quiet_NaN();  // log d(t1)/d(t2) / (t2 - t1)
  double density_violation = std::numeric_limits<double>::quiet_NaN();
  double g_top_ratio = 0;     // g(top) / max |g|
  double l1_sign_dist = 0;    // || g/max|g| - (1_{Omega+} - 1_{Omega-}) ||_{L1(pi)}
  int flagged = 0;            // |g| < g_zero_tol

  bool hard_ok() const {
    return db_error < 1e-12 && row_error < 1e-12 && antisym_error < 1e-10 && mono_violation <= 1e-10 &&
           sandwich && submult_excess <= 1e-12 && pair_bound_excess <= 1e-12 &&
           (std::isnan(density_violation) || density_violation <= 1e-10);
  }
};

struct SuiteOptions {
  Mode mode = Mode::automatic;
  int grid = 10;              // (t, s) grid side
  double grid_step = 0.2;     // in units of T_rel
  int random_pairs = 3;
  std::uint64_t seed = 1;
  int decay_max_states = dense_auto_limit;  // exact curve at 20 T_rel only up to this size
};

inline SpectralSuite spectral_suite(int L, double lambda, const SuiteOptions& opt = {}) {
  auto pc = build_generator(L, lambda, BoundaryPair::free(L));
  const auto& c = pc.chain;
  const auto& space = pc.space;
  const int n = c.size();
  if (opt.mode == Mode::dense) use_dense(Mode::dense, n);  // throws past the dense capacity
  SpectralSuite r;
  r.L = L;
  r.lambda = lambda;
  r.states = n;
  r.db_error = detailed_balance_error(c);
  r.row_error = row_sum_error(c);
  const auto s = solve_spectrum(c, opt.mode);
  r.dense = s.full;
  r.gap = s.gap;
  r.t_rel = s.t_rel;
  r.residual = s.residual;
  r.antisym_error = antisymmetry_error(c, s.g);
  r.mono_violation = std::max(0.0, monotonicity_violation(space, s.g));
  r.pi_min = *std::min_element(s.pi.begin(), s.pi.end());

  const int top = c.top, bottom = space.index_of(Path::minimal(L));
  const auto mix = tv_and_mixing(c, s, {top, bottom}, 1.0 / (2.0 * M_E), {});
  r.t_mix = mix.t_mix;
  r.sandwich_hi = (1.0 - std::log(r.pi_min)) * r.t_rel;
  r.sandwich = mix.sandwich;

  Semigroup sg(c, &s);
  const double step = opt.grid_step * r.t_rel;
  std::vector<double> times;
  for (int k = 1; k <= 2 * opt.grid; ++k) times.push_back(k * step);
  auto diff = point_mass(n, top);
  diff[bottom] -= 1.0;
  std::vector<double> d(times.size());
  sg.evolve(diff, times, [&](int q, const std::vector<double>& v) { d[q] = half_l1(v); });
  r.submult_excess = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < opt.grid; ++i)
    for (int j = 0; j < opt.grid; ++j)
      r.submult_excess = std::max(r.submult_excess, d[i + j + 1] - d[i] * d[j]);

  Stream rs(opt.seed, static_cast<std::uint64_t>(L) * 1000 + static_cast<std::uint64_t>(lambda * 100));
  r.pair_bound_excess = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < opt.random_pairs; ++k) {
    const int a = static_cast<int>(rs.below(n)), b = static_cast<int>(rs.below(n));
    auto v = point_mass(n, a);
    v[b] -= 1.0;
    sg.evolve(v, times, [&](int q, const std::vector<double>& w) {
      r.pair_bound_excess = std::max(r.pair_bound_excess, half_l1(w) - 4.0 * L * L * d[q]);
    });
  }

  if (n <= opt.decay_max_states) {
    const double t = 20 * r.t_rel;
    const auto v = sg.at(diff, {10 * r.t_rel, t});
    const double d1 = half_l1(v[0]), d2 = half_l1(v[1]);
    r.decay_rel_error = std::fabs(-std::log(d2) / t - r.gap) / r.gap;
    r.decay_rate_error = std::fabs(std::log(d1 / d2) / (t - 10 * r.t_rel) - r.gap) / r.gap;
  }

  const int ell = default_ell(L);
  std::vector<char> plus(n), minus(n);
  double zp = 0;
  for (int i = 0; i < n; ++i) {
    const auto p = space.path(i);
    plus[i] = in_window_sign(p, ell, 1);
    minus[i] = in_window_sign(p, ell, -1);
    if (plus[i]) zp += s.pi[i];
  }
  if (s.full) {
    // f = d(pi^+)/d(pi) is increasing, hence so is f_t
    std::vector<double> mu(n, 0.0);
    for (int i = 0; i < n; ++i)
      if (plus[i]) mu[i] = s.pi[i] / zp;
    double worst = -std::numeric_limits<double>::infinity();
    sg.evolve(mu, {0.5 * r.t_rel, r.t_rel, 2 * r.t_rel}, [&](int, const std::vector<double>& v) {
      std::vector<double> f(n);
      for (int i = 0; i < n; ++i) f[i] = v[i] / s.pi[i];
      worst = std::max(worst, monotonicity_violation(space, f));
    });
    r.density_violation = std::max(0.0, worst);
  }

  double gmax = 0;
  for (double v : s.g) gmax = std::max(gmax, std::fabs(v));
  r.g_top_ratio = s.g[top] / gmax;
  for (int i = 0; i < n; ++i) {
    if (std::fabs(s.g[i]) < g_zero_tol) ++r.flagged;
    const double ind = (plus[i] ? 1.0 : 0.0) - (minus[i] ? 1.0 : 0.0);
    r.l1_sign_dist += s.pi[i] * std::fabs(s.g[i] / gmax - ind);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Quasi-stationary distribution of the chain killed on Gamma = {g < 0}.

struct QsdReport {
  int L = 0;
  double lambda = 0;
  double gap = 0;
  double t_rel = 0;
  double gamma = 0;
  double pi_gamma = 0;
  double ratio = 0;  // gamma T_rel
  double survival_error = 0;
  int flagged = 0;
  bool gamma_bracket = false;  // pi(Gamma) <= gamma T_rel <= 1
};

inline QsdReport qsd_report(int L, double lambda, int points = 50, Mode mode = Mode::automatic) {
  auto pc = build_generator(L, lambda, BoundaryPair::free(L));
  const auto& c = pc.chain;
  const auto s = solve_spectrum(c, mode);
  const int n = c.size();
  QsdReport r;
  r.L = L;
  r.lambda = lambda;
  r.gap = s.gap;
  r.t_rel = s.t_rel;
  std::vector<char> in_gamma(n);
  for (int i = 0; i < n; ++i) {
    in_gamma[i] = s.g[i] < -g_zero_tol;
    if (std::fabs(s.g[i]) < g_zero_tol) ++r.flagged;
  }
  const auto k = qsd_analysis(c, in_gamma, mode);
  r.gamma = k.gamma;
  r.pi_gamma = k.pi_gamma;
  r.ratio = k.gamma * s.t_rel;
  r.gamma_bracket = r.pi_gamma <= r.ratio * (1 + 1e-12) && r.ratio <= 1 + 1e-12;
  std::vector<double> times;
  for (int q = 1; q <= points; ++q) times.push_back(5.0 / k.gamma * q / points);
  const auto surv = survival_curve(c, in_gamma, k.nu_gamma, times);
  for (int q = 0; q < points; ++q) r.survival_error = std::max(r.survival_error, std::fabs(surv[q] - std::exp(-k.gamma * times[q])));
  return r;
}

// ---------------------------------------------------------------------------
// Tunneling from the maximal path to the negative phase.

enum class TunnelTarget { s0_minus, omega_minus };

struct TunnelReport {
  int L = 0;
  double lambda = 0;
  int runs = 0;
  double t_rel = 0;
  double tau_mean = 0;
  double ratio = 0;  // mean / (2 T_rel)
  double ks_p = 0;
  double ks_stat = 0;
  int censored = 0;
  double occupation_ratio = 0;  // E[time outside Omega+ u Omega-] / E[tau]
  std::vector<double> tau;
};

inline TunnelReport tunnel_experiment(int L, double lambda, int runs, std::uint64_t seed, double horizon,
                                      TunnelTarget target = TunnelTarget::s0_minus, int jobs = 1) {
  auto pc = build_generator(L, lambda, BoundaryPair::free(L));
  const auto s = solve_spectrum(pc.chain);
  const int n = pc.chain.size();
  const int ell = default_ell(L);
  std::vector<char> goal(n), phase(n);
  for (int i = 0; i < n; ++i) {
    const auto p = pc.space.path(i);
    goal[i] = target == TunnelTarget::s0_minus ? s.g[i] < -g_zero_tol : in_window_sign(p, ell, -1);
    phase[i] = in_window_sign(p, ell, 1) || in_window_sign(p, ell, -1);
  }
  const auto& space = pc.space;
  StatePredicate hit = [&](const State& st) { return goal[space.index_of(st.mask)] != 0; };
  StatePredicate outside = [&](const State& st) { return phase[space.index_of(st.mask)] == 0; };
  const auto h = hitting_time_sample(DynamicsSpec::free(L, lambda), Path::maximal(L), hit, runs, horizon, seed,
                                     outside, jobs);
  TunnelReport r;
  r.L = L;
  r.lambda = lambda;
  r.runs = runs;
  r.t_rel = s.t_rel;
  r.tau_mean = h.tau_mean;
  r.ratio = h.tau_mean / (2 * s.t_rel);
  r.ks_p = h.ks.p_value;
  r.ks_stat = h.ks.statistic;
  r.censored = h.censored_count;
  r.occupation_ratio = h.tau_mean > 0 ? h.occupation_mean / h.tau_mean : 0;
  r.tau = h.tau;
  return r;
}

// ---------------------------------------------------------------------------
// Exact mixing profile from the maximal path against the two-phase mixture.

struct ProfileReport {
  int L = 0;
  double lambda = 0;
  double t_rel = 0;
  double t_start = 0;
  double sup_tv = 0;       // over the grid and t = infinity
  double sup_at = 0;
  double limit_tv = 0;     // ||pi - (pi^+ + pi^-)/2||
  double pi_plus = 0;      // pi(Omega^+)
  double sup_tv_s0 = 0;    // same sup with pi^{+/-} replaced by pi conditioned on {g > 0}, {g < 0}
  double t_mix = 0;        // from the maximal path, delta = eps
  double tmix_ratio = 0;   // t_mix / (T_rel log(1/(2 eps)))
  std::vector<double> times, tv;
};

inline ProfileReport mixing_profile(int L, double lambda, double eps = 0.05, int points = 120, double t_max_rel = 8) {
  auto pc = build_generator(L, lambda, BoundaryPair::free(L));
  const auto& c = pc.chain;
  const auto s = solve_spectrum(c);
  const int n = c.size();
  const int ell = default_ell(L);
  std::vector<double> pp(n, 0.0), pm(n, 0.0), qp(n, 0.0), qm(n, 0.0);
  double zp = 0, zm = 0, yp = 0, ym = 0;
  for (int i = 0; i < n; ++i) {
    const auto p = pc.space.path(i);
    if (in_window_sign(p, ell, 1)) zp += (pp[i] = s.pi[i]);
    if (in_window_sign(p, ell, -1)) zm += (pm[i] = s.pi[i]);
    if (s.g[i] > g_zero_tol) yp += (qp[i] = s.pi[i]);
    if (s.g[i] < -g_zero_tol) ym += (qm[i] = s.pi[i]);
  }
  for (int i = 0; i < n; ++i) {
    pp[i] /= zp;
    pm[i] /= zm;
    qp[i] /= yp;
    qm[i] /= ym;
  }
  ProfileReport r;
  r.L = L;
  r.lambda = lambda;
  r.t_rel = s.t_rel;
  r.pi_plus = zp;
  r.t_start = std::pow(static_cast<double>(L), 2.2);
  const double t_end = std::max(t_max_rel * s.t_rel, 2 * r.t_start);
  for (int q = 0; q < points; ++q) r.times.push_back(r.t_start * std::pow(t_end / r.t_start, static_cast<double>(q) / (points - 1)));
  Semigroup sg(c, &s);
  r.tv.resize(points);
  sg.evolve(point_mass(n, c.top), r.times, [&](int q, const std::vector<double>& v) {
    const double e = std::exp(-r.times[q] / s.t_rel);
    double d = 0, d0 = 0;
    for (int i = 0; i < n; ++i) {
      d += std::fabs(v[i] - 0.5 * (1 + e) * pp[i] - 0.5 * (1 - e) * pm[i]);
      d0 += std::fabs(v[i] - 0.5 * (1 + e) * qp[i] - 0.5 * (1 - e) * qm[i]);
    }
    r.tv[q] = 0.5 * d;
    r.sup_tv_s0 = std::max(r.sup_tv_s0, 0.5 * d0);
  });
  double lim0 = 0;
  for (int i = 0; i < n; ++i) {
    r.limit_tv += 0.5 * std::fabs(s.pi[i] - 0.5 * (pp[i] + pm[i]));
    lim0 += 0.5 * std::fabs(s.pi[i] - 0.5 * (qp[i] + qm[i]));
  }
  r.sup_tv_s0 = std::max(r.sup_tv_s0, lim0);
  r.sup_tv = r.limit_tv;
  r.sup_at = std::numeric_limits<double>::infinity();
  for (int q = 0; q < points; ++q)
    if (r.tv[q] > r.sup_tv) {
      r.sup_tv = r.tv[q];
      r.sup_at = r.times[q];
    }
  const double pi_min = *std::min_element(s.pi.begin(), s.pi.end());
  r.t_mix = mixing_time(sg, point_mass(n, c.top), eps, 2 * (1 - std::log(pi_min)) * s.t_rel, 1e-4, s.t_rel / 4);
  r.tmix_ratio = r.t_mix / (s.t_rel * std::log(1 / (2 * eps)));
  return r;
}

// ---------------------------------------------------------------------------
// Sign-field chain scaling.

struct SigmaScalingRow {
  int L = 0;
  double gap = 0;
  double quotient = 0;
  double scaled = 0;  // quotient L^{5/2} / log L
  double middle_mass = 0;
  double quotient_err = 0;
  bool exact = true;
};

inline SigmaScalingRow sigma_row_exact(int L, double lambda) {
  SigmaScalingRow r;
  r.L = L;
  const auto sc = projected_sigma_chain(L, lambda);
  r.gap = solve_spectrum(sc.chain).gap;
  const auto q = sigma_variational_quotient_exact(L, lambda);
  r.quotient = q.quotient;
  r.middle_mass = q.middle_mass;
  r.scaled = q.quotient * std::pow(L, 2.5) / std::log(static_cast<double>(L));
  return r;
}

inline SigmaScalingRow sigma_row_mc(int L, double lambda, long n_mc, std::uint64_t seed) {
  SigmaScalingRow r;
  r.L = L;
  r.exact = false;
  r.gap = std::numeric_limits<double>::quiet_NaN();
  const auto q = sigma_variational_quotient_mc(L, lambda, n_mc, seed);
  r.quotient = q.quotient;
  r.quotient_err = q.stderr_quotient;
  r.middle_mass = q.middle_mass;
  r.scaled = q.quotient * std::pow(L, 2.5) / std::log(static_cast<double>(L));
  return r;
}

// "Bounded": the largest scaled value is at most `factor` times the one at
// the smallest L.
inline bool bounded_series(const std::vector<SigmaScalingRow>& rows, double factor = 2.0) {
  if (rows.empty()) return false;
  double mx = 0;
  for (const auto& r : rows) mx = std::max(mx, r.scaled);
  return mx <= factor * rows.front().scaled;
}

// ---------------------------------------------------------------------------
// Grand coupling order check.

struct OrderReport {
  long events = 0;
  long runs = 0;
  long violations = 0;
  long order_checks = 0;
};

// Replicas: maximal, minimal and `extra` random paths, all driven by shared
// randomness, until the total number of events reaches `events`.
inline OrderReport grand_coupling_order_check(int L, double lambda, long events, std::uint64_t seed, int extra = 4,
                                              long per_run = 20000) {
  const auto spec = DynamicsSpec::free(L, lambda);
  const auto all = enumerate_masks(L);
  OrderReport r;
  Stream pick(seed, 0xC0FFEE);
  while (r.events < events) {
    std::vector<Path> init{Path::maximal(L), Path::minimal(L)};
    for (int k = 0; k < extra; ++k) init.push_back(Path::from_mask(L, all[pick.below(all.size())]));
    try {
      const auto run = grand_coupling_run(spec, init, std::numeric_limits<double>::infinity(), seed,
                                          static_cast<std::uint64_t>(r.runs), {}, false,
                                          std::min(per_run, events - r.events));
      r.events += run.events;
      r.order_checks += run.order_checks;
    } catch (const order_violation&) {
      ++r.violations;
      r.events += 1;
    }
    ++r.runs;
  }
  return r;
}

}  // namespace pinpoly
