// Acceptance gate: one PASS/FAIL line per criterion.
#include <pinpoly/analysis.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

using namespace pinpoly;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool pass = o.ok && in_time;
  failures += !pass;
  std::printf("%s %2d %-28s %s; %.1f s (budget %.0f s)%s\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs,
              budget_s, in_time ? "" : " over budget");
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

}  // namespace

int main() {
  criterion(1, "reflection identity", 1, [] {
    double worst = 0;
    for (double lam : {0.1, 0.5, 0.9}) worst = std::max(worst, reflection_identity_error(400, lam));
    return Outcome{worst < 1e-12, "max rel error " + fmt("%.3g", worst)};
  });

  criterion(2, "kernel tail exponent", 5, [] {
    bool ok = true;
    std::string d = "slopes";
    for (double lam : {0.1, 0.5, 0.9}) {
      const double s = kernel_tail(lam, 200, 2000).exponent;
      ok = ok && std::fabs(s + 1.5) <= 0.05;
      d += " " + fmt("%.4f", s);
    }
    return Outcome{ok, d};
  });

  criterion(3, "oracle equivalence", 10, [] {
    long compared = 0, mismatches = 0;
    for (int L = 1; L <= 6; ++L)
      for (const auto& lam : {rational(1, 2), rational(1), rational(3, 2)}) {
        const auto r = oracle_equivalence(L, lam);
        compared += r.compared;
        mismatches += r.mismatches;
      }
    return Outcome{mismatches == 0 && compared > 0,
                   std::to_string(compared) + " values, " + std::to_string(mismatches) + " mismatches"};
  });

  criterion(4, "spectral suite", 120, [] {
    int bad = 0, total = 0;
    double db = 0, anti = 0, mono = -1e300, sub = -1e300, mpm = -1e300;
    for (int L = 3; L <= 8; ++L)
      for (double lam : {0.3, 0.5, 0.8}) {
        const auto r = spectral_suite(L, lam);
        ++total;
        bad += !r.hard_ok();
        db = std::max({db, r.db_error, r.row_error});
        anti = std::max(anti, r.antisym_error);
        mono = std::max(mono, r.mono_violation);
        sub = std::max(sub, r.submult_excess);
        mpm = std::max(mpm, r.pair_bound_excess);
      }
    return Outcome{bad == 0, std::to_string(total - bad) + "/" + std::to_string(total) + " cases; balance " +
                                 fmt("%.2g", db) + ", antisym " + fmt("%.2g", anti) + ", mono " + fmt("%.2g", mono) +
                                 ", submult " + fmt("%.2g", sub) + ", 4L^2 " + fmt("%.2g", mpm)};
  });

  criterion(5, "quasi-stationary law", 60, [] {
    double err = 0;
    bool gamma_bracket = true;
    std::string ratios;
    for (int L : {4, 6, 8})
      for (double lam : {0.3, 0.5, 0.8}) {
        const auto q = qsd_report(L, lam, 50);
        err = std::max(err, q.survival_error);
        gamma_bracket = gamma_bracket && q.gamma_bracket;
        if (lam == 0.5) ratios += " " + fmt("%.3f", q.ratio);
      }
    return Outcome{err < 1e-8 && gamma_bracket, "survival error " + fmt("%.2g", err) + ", gamma_bracket " + (gamma_bracket ? "holds" : "fails") +
                                           ", gamma*T_rel at 0.5:" + ratios};
  });

  criterion(6, "block decomposition bound", 60, [] {
    bool ok = true;
    std::string d;
    for (int L : {3, 4, 5}) {
      const auto pc = build_generator(L, 0.5, BoundaryPair::free(L));
      const auto j = jerrum_bound(pc.chain, sigma_blocks(pc.space));
      ok = ok && j.holds;
      d += "L=" + std::to_string(L) + " gap " + fmt("%.4g", j.gap) + " >= " + fmt("%.3g", j.bound) + "; ";
    }
    return Outcome{ok, d};
  });

  criterion(7, "metastability", 1800, [] {
    const auto t = tunnel_experiment(10, 0.5, 1000, 20240501, 1e7, TunnelTarget::s0_minus);
    const bool ok = t.ratio >= 0.85 && t.ratio <= 1.15 && t.ks_p > 0.01 && t.censored == 0;
    return Outcome{ok, "mean/(2 T_rel) " + fmt("%.4f", t.ratio) + ", KS p " + fmt("%.3g", t.ks_p) + ", censored " +
                           std::to_string(t.censored) + ", occupation ratio " + fmt("%.3f", t.occupation_ratio)};
  });

  criterion(8, "mixing profile", 300, [] {
    const auto p = mixing_profile(10, 0.5, 0.05);
    const bool ok = p.sup_tv < 0.15 && p.tmix_ratio >= 0.5 && p.tmix_ratio <= 1.5;
    return Outcome{ok, "sup TV " + fmt("%.4f", p.sup_tv) + " (limit " + fmt("%.4f", p.limit_tv) + ", pi(Omega+) " +
                           fmt("%.4f", p.pi_plus) + ", with {g>0},{g<0}: " + fmt("%.4f", p.sup_tv_s0) +
                           "), T_mix ratio " + fmt("%.4f", p.tmix_ratio)};
  });

  criterion(9, "single-crossing scaling", 120, [] {
    std::vector<double> x, y;
    for (int k = 6; k <= 14; ++k) {
      x.push_back(std::ldexp(1.0, k));
      y.push_back(single_crossing_gap(1 << k, RhoKind::rho0).gap);
    }
    const double s = loglog_fit(x, y).slope;
    return Outcome{s >= -2.6 && s <= -2.4, "slope " + fmt("%.4f", s)};
  });

  criterion(10, "sign-field scaling", 900, [] {
    std::vector<double> x, y;
    std::vector<SigmaScalingRow> rows;
    bool above = true;
    for (int L = 4; L <= 12; ++L) {
      const auto r = sigma_row_exact(L, 0.5);
      x.push_back(L);
      y.push_back(r.gap);
      above = above && r.quotient >= r.gap;
      if (L >= 8) rows.push_back(r);
    }
    for (int L : {13, 14}) {
      const auto r = sigma_row_exact(L, 0.5);
      above = above && r.quotient >= r.gap;
      rows.push_back(r);
    }
    for (int L : {16, 24, 32, 48, 64}) rows.push_back(sigma_row_mc(L, 0.5, 20000, 77));
    const double s = loglog_fit(x, y).slope;
    const bool bounded = bounded_series(rows);
    std::string sc;
    for (const auto& r : rows) sc += " " + fmt("%.2f", r.scaled);
    return Outcome{s >= -2.9 && s <= -2.1 && above && bounded,
                   "slope " + fmt("%.4f", s) + ", quotient >= gap " + (above ? "yes" : "no") + ", scaled" + sc};
  });

  criterion(11, "particle dynamics", 300, [] {
    const auto ker = make_kernel<double>(200, 0.5);
    double gap1 = 0;
    for (int L : {10, 20, 40}) gap1 = std::max(gap1, std::fabs(particle_gap_exact(1, L, ker) - 1));
    const auto k20 = make_kernel<double>(40, 0.5);
    const double exact2 = particle_gap_exact(2, 20, k20);
    const double mc2 = particle_gap_mc(2, 20, k20, 2e5, 1.0, 31).gap;
    const double rel = std::fabs(mc2 / exact2 - 1);
    bool band = true;
    std::string tails;
    for (int n : {2, 3})
      for (int L : {1000, 10000}) {
        const auto t = first_segment_tail(n, L, 0.5);
        band = band && t.scaled >= 0.9 && t.scaled <= 1.1;
        tails += " " + fmt("%.3f", t.scaled);
      }
    const bool ok = gap1 < 1e-10 && rel < 0.2 && band;
    return Outcome{ok, "|gap1-1| " + fmt("%.2g", gap1) + ", n=2 exact " + fmt("%.4f", exact2) + " mc " +
                           fmt("%.4f", mc2) + ", (n+1)*tail" + tails};
  });

  criterion(12, "coupling correctness", 600, [] {
    const auto o = grand_coupling_order_check(10, 0.5, 1000000, 12);
    const auto pc = build_generator(8, 0.5, BoundaryPair::free(8));
    const double exact = solve_spectrum(pc.chain).gap;
    const auto e = gap_estimate_from_coalescence(DynamicsSpec::free(8, 0.5), 3000, 2000, 11);
    const double rel = std::fabs(e.gap / exact - 1);
    return Outcome{o.violations == 0 && o.events >= 1000000 && rel < 0.25,
                   std::to_string(o.events) + " events, " + std::to_string(o.violations) + " violations; gap MC " +
                       fmt("%.5f", e.gap) + " vs exact " + fmt("%.5f", exact)};
  });

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
