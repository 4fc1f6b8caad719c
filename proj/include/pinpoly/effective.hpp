#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chain.hpp"
#include "equilibrium.hpp"
#include "linalg.hpp"
#include "rng.hpp"
#include "simulate.hpp"
#include "spectral.hpp"
#include "stats.hpp"

namespace pinpoly {

// ---------------------------------------------------------------------------
// Birth-death chains on E_L = {-L+2, -L+4, ..., L-2}.

struct BirthDeathChain {
  int L = 0;
  std::vector<int> sites;
  std::vector<double> rho;  // normalized stationary law
  std::vector<double> up;   // c(x, x+2); last entry 0
  std::vector<double> down; // c(x, x-2); first entry 0
};

// Smallest eigenvalue of a symmetric tridiagonal matrix by Sturm bisection.
inline double tridiagonal_min_eigenvalue(const std::vector<double>& diag, const std::vector<double>& off) {
  const int n = static_cast<int>(diag.size());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int i = 0; i < n; ++i) {
    const double r = (i > 0 ? std::fabs(off[i - 1]) : 0) + (i + 1 < n ? std::fabs(off[i]) : 0);
    lo = std::min(lo, diag[i] - r);
    hi = std::max(hi, diag[i] + r);
  }
  auto count_below = [&](double mu) {
    int c = 0;
    double d = 1;
    for (int i = 0; i < n; ++i) {
      d = diag[i] - mu - (i > 0 ? off[i - 1] * off[i - 1] / d : 0.0);
      if (d == 0) d = -1e-300;
      if (d < 0) ++c;
    }
    return c;
  };
  lo = std::max(lo, 0.0);
  for (int it = 0; it < 400 && hi - lo > 1e-15 * std::max(lo, 1e-300); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (count_below(mid) >= 1 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

// Spectral gap of a birth-death chain: smallest eigenvalue of the positive
// definite matrix acting on increments (the zero mode is removed exactly).
inline double birth_death_gap(const BirthDeathChain& c) {
  const int n = static_cast<int>(c.sites.size());
  if (n < 2) throw std::invalid_argument("birth_death_gap: need at least two sites");
  std::vector<double> a(n - 1), diag(n - 1), off(n > 2 ? n - 2 : 0);
  for (int i = 0; i + 1 < n; ++i) a[i] = c.rho[i] * c.up[i];
  for (int i = 0; i + 1 < n; ++i) diag[i] = a[i] / c.rho[i] + a[i] / c.rho[i + 1];
  for (int i = 0; i + 2 < n; ++i) off[i] = -std::sqrt(a[i] * a[i + 1]) / c.rho[i + 1];
  return tridiagonal_min_eigenvalue(diag, off);
}

inline ReversibleChain to_chain(const BirthDeathChain& c, const std::string& label) {
  const int n = static_cast<int>(c.sites.size());
  ChainBuilder b(n);
  for (int i = 0; i + 1 < n; ++i) {
    b.add(i, i + 1, c.up[i]);
    b.add(i + 1, i, c.down[i + 1]);
  }
  return b.build(label, c.rho);
}

inline BirthDeathChain rho0_chain(int L) {
  if (L < 3) throw std::invalid_argument("single_crossing: |E_L| < 2");
  BirthDeathChain c;
  c.L = L;
  double z = 0;
  for (int x = -L + 2; x <= L - 2; x += 2) {
    c.sites.push_back(x);
    c.rho.push_back(std::pow(static_cast<double>(L + x), -1.5) * std::pow(static_cast<double>(L - x), -1.5));
    z += c.rho.back();
  }
  for (double& r : c.rho) r /= z;
  const int n = static_cast<int>(c.sites.size());
  c.up.assign(n, 1.0);
  c.up[n - 1] = 0;
  c.down.assign(n, 0.0);
  for (int i = 1; i < n; ++i) c.down[i] = c.rho[i - 1] / c.rho[i];
  return c;
}

// Single crossing inside the plus-first sign sector: rho from the sign-field
// weights, rates from the sign-flip rates.
inline BirthDeathChain rho_chain(int L, double lambda, std::optional<double> co = {}) {
  if (L < 3) throw std::invalid_argument("single_crossing: |E_L| < 2");
  std::optional<int> cap;
  if (co) cap = zero_cap(L, *co);
  SigmaModel<double> model(L, lambda, cap);
  BirthDeathChain c;
  c.L = L;
  auto sigma_of = [&](int x) {  // + on sites left of x, - on the right
    SignField s{L, std::vector<int>(L)};
    for (int i = 0; i < L; ++i) s.sign[i] = s.site(i) < x ? 1 : -1;
    return s;
  };
  double z = 0;
  for (int x = -L + 2; x <= L - 2; x += 2) {
    c.sites.push_back(x);
    c.rho.push_back(model.weight(sigma_of(x)));
    z += c.rho.back();
  }
  for (double& r : c.rho) r /= z;
  const int n = static_cast<int>(c.sites.size());
  c.up.assign(n, 0.0);
  c.down.assign(n, 0.0);
  for (int k = 0; k < n; ++k) {
    const int x = c.sites[k];
    const auto s = sigma_of(x);
    // O_L index of site y is (y + L - 1) / 2
    if (k + 1 < n) c.up[k] = model.theta(s, (x + 1 + L - 1) / 2);
    if (k > 0) c.down[k] = model.theta(s, (x - 1 + L - 1) / 2);
  }
  return c;
}

// Dirichlet form / variance of phi(x) = clip(2x/L, -1, 1).
inline double ramp_quotient(const BirthDeathChain& c) {
  const int n = static_cast<int>(c.sites.size());
  std::vector<double> phi(n);
  for (int i = 0; i < n; ++i) phi[i] = std::clamp(2.0 * c.sites[i] / c.L, -1.0, 1.0);
  double e = 0, m = 0, m2 = 0;
  for (int i = 0; i + 1 < n; ++i) e += c.rho[i] * c.up[i] * (phi[i + 1] - phi[i]) * (phi[i + 1] - phi[i]);
  for (int i = 0; i < n; ++i) {
    m += c.rho[i] * phi[i];
    m2 += c.rho[i] * phi[i] * phi[i];
  }
  return e / (m2 - m * m);
}

enum class RhoKind { rho, rho0 };

struct SingleCrossingGap {
  int L = 0;
  double gap = 0;
  double ramp_bound = 0;
};

inline SingleCrossingGap single_crossing_gap(int L, RhoKind kind, double lambda = 0.5) {
  const auto c = kind == RhoKind::rho0 ? rho0_chain(L) : rho_chain(L, lambda);
  return {L, birth_death_gap(c), ramp_quotient(c)};
}

// ---------------------------------------------------------------------------
// Conditional law of one crossing between fixed neighbours.

struct ParticleLaw {
  int left = 0, right = 0;
  std::vector<int> offsets;  // k = position - left
  std::vector<double> prob;
  std::vector<double> cdf;
  double alpha = 0;          // P(k = 2)

  int sample(double u) const {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back());
    return left + offsets[std::min<std::size_t>(it - cdf.begin(), offsets.size() - 1)];
  }
};

inline ParticleLaw conditional_particle_law(int left, int right, const ExcursionKernel<double>& ker) {
  const int g = right - left;
  if (g < 4 || g % 2 != 0) throw std::invalid_argument("conditional_particle_law: need an even gap >= 4");
  if (g > ker.max_len()) throw std::invalid_argument("conditional_particle_law: kernel too short");
  ParticleLaw p;
  p.left = left;
  p.right = right;
  double z = 0;
  for (int k = 2; k <= g - 2; k += 2) {
    p.offsets.push_back(k);
    p.prob.push_back(ker(k) * ker(g - k));
    z += p.prob.back();
  }
  double acc = 0;
  for (double& v : p.prob) {
    v /= z;
    acc += v;
    p.cdf.push_back(acc);
  }
  p.alpha = p.prob.front();
  return p;
}

// ---------------------------------------------------------------------------
// n-particle full-conditional dynamics.

// Configurations with n crossings: occupied slots k_1 < ... < k_n in 1..L-1
// (position x = -L + 2k), ordered colexicographically on the gap vector.
class CompositionSpace {
 public:
  CompositionSpace(int n, int L) : n_(n), L_(L) {
    if (n < 1 || n > L - 1) throw std::invalid_argument("CompositionSpace: need 1 <= n <= L-1");
    C_.assign(L + 1, std::vector<double>(n + 2, 0.0));
    for (int a = 0; a <= L; ++a) {
      C_[a][0] = 1;
      for (int b = 1; b <= n + 1 && b <= a; ++b) C_[a][b] = C_[a - 1][b - 1] + (b <= a - 1 ? C_[a - 1][b] : 0);
    }
    size_ = static_cast<long>(C_[L - 1][n]);
  }
  long size() const { return size_; }
  int n() const { return n_; }
  int L() const { return L_; }

  long index(const std::vector<int>& k) const {
    long r = 0;
    for (int i = 0; i < n_; ++i) r += static_cast<long>(C_[k[i] - 1][i + 1]);
    return size_ - 1 - r;
  }
  std::vector<int> slots(long idx) const {
    long r = size_ - 1 - idx;
    std::vector<int> k(n_);
    int top = L_ - 1;
    for (int i = n_ - 1; i >= 0; --i) {
      int v = i + 1;
      while (v + 1 <= top && C_[v][i + 1] <= r) ++v;
      k[i] = v;
      r -= static_cast<long>(C_[v - 1][i + 1]);
      top = v - 1;
    }
    return k;
  }
  std::vector<int> positions(long idx) const {
    auto k = slots(idx);
    for (int& v : k) v = -L_ + 2 * v;
    return k;
  }
  long index_of_positions(const std::vector<int>& x) const {
    std::vector<int> k(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) k[i] = (x[i] + L_) / 2;
    return index(k);
  }

 private:
  int n_, L_;
  std::vector<std::vector<double>> C_;  // binomials C_[a][b]
  long size_ = 0;
};

inline ReversibleChain particle_chain(const CompositionSpace& sp, const ExcursionKernel<double>& ker,
                                      long max_states = 2000000) {
  if (sp.size() > max_states)
    throw capacity_error("particle_dynamics: " + std::to_string(sp.size()) + " states exceed the bound " +
                         std::to_string(max_states));
  const int n = sp.n(), L = sp.L();
  ReversibleChain c;
  c.label = "particle-system";
  const long N = sp.size();
  c.weight.resize(N);
  c.rates.n = static_cast<int>(N);
  c.rates.ptr.assign(1, 0);
  for (long s = 0; s < N; ++s) {
    auto x = sp.positions(s);
    double w = 1;
    for (int i = 0; i <= n; ++i) w *= ker((i < n ? x[i] : L) - (i > 0 ? x[i - 1] : -L));
    c.weight[s] = w;
    std::vector<std::pair<int, double>> row;
    for (int i = 0; i < n; ++i) {
      const int a = i > 0 ? x[i - 1] : -L, b = i + 1 < n ? x[i + 1] : L;
      if (b - a < 6) continue;
      const auto law = conditional_particle_law(a, b, ker);
      const int cur = x[i];
      for (std::size_t q = 0; q < law.offsets.size(); ++q) {
        const int y = a + law.offsets[q];
        if (y == cur) continue;
        x[i] = y;
        row.emplace_back(static_cast<int>(sp.index_of_positions(x)), law.prob[q]);
      }
      x[i] = cur;
    }
    std::sort(row.begin(), row.end());
    for (auto& [j, r] : row) {
      c.rates.col.push_back(j);
      c.rates.val.push_back(r);
    }
    c.rates.ptr.push_back(static_cast<int>(c.rates.col.size()));
  }
  c.mirror.resize(N);
  for (long s = 0; s < N; ++s) {
    auto x = sp.positions(s);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[i] = -x[n - 1 - i];
    c.mirror[s] = static_cast<int>(sp.index_of_positions(y));
  }
  c.top = 0;
  return c;
}

inline double particle_gap_exact(int n, int L, const ExcursionKernel<double>& ker, Mode mode = Mode::automatic) {
  CompositionSpace sp(n, L);
  if (sp.size() < 2) throw std::invalid_argument("particle_dynamics: single configuration, no gap");
  const auto c = particle_chain(sp, ker);
  return solve_spectrum(c, mode).gap;
}

// Simulated full-conditional dynamics (rate 1 per particle).
class ParticleSimulator {
 public:
  ParticleSimulator(int L, const ExcursionKernel<double>& ker, std::vector<int> x, std::uint64_t seed,
                    std::uint64_t stream)
      : L_(L), ker_(ker), x_(std::move(x)), rs_(seed, stream) {
    check();
  }

  const std::vector<int>& positions() const { return x_; }
  double time() const { return t_; }
  double last_alpha() const { return alpha_; }

  // Advances by one ring; returns the particle index updated.
  int step() {
    const int n = static_cast<int>(x_.size());
    t_ += rs_.exponential(n);
    const int i = static_cast<int>(rs_.below(n));
    const double u = rs_.uniform();
    update(i, u);
    return i;
  }
  double peek_next_time() const {
    Stream copy = rs_;
    return t_ + copy.exponential(static_cast<double>(x_.size()));
  }

  void update(int i, double u) {
    const int n = static_cast<int>(x_.size());
    const int a = i > 0 ? x_[i - 1] : -L_, b = i + 1 < n ? x_[i + 1] : L_;
    if (b - a < 4) throw std::logic_error("ParticleSimulator: ordering violated");
    if (b - a == 4) {
      alpha_ = 1;
      x_[i] = a + 2;
    } else {
      const auto law = conditional_particle_law(a, b, ker_);
      alpha_ = law.alpha;
      x_[i] = law.sample(u);
    }
    check();
  }

 private:
  void check() const {
    int prev = -L_;
    for (int v : x_) {
      if (v - prev < 2 || (v - prev) % 2 != 0) throw std::logic_error("ParticleSimulator: invalid configuration");
      prev = v;
    }
    if (L_ - prev < 2) throw std::logic_error("ParticleSimulator: invalid configuration");
  }

  int L_;
  const ExcursionKernel<double>& ker_;
  std::vector<int> x_;
  Stream rs_;
  double t_ = 0;
  double alpha_ = 0;
};

// Exact sample from nu_n by sequential conditionals.
inline std::vector<int> sample_crossings(const CrossingLaw<double>& law, Stream& rs) {
  std::vector<int> x;
  int a = -law.L();
  for (int i = 1; i <= law.n(); ++i) {
    const auto p = law.conditional_next(i, a);
    std::vector<double> w(p.begin(), p.end());
    a = sample_index(w, rs) - law.L();
    x.push_back(a);
  }
  return x;
}

struct AutocorrelationGap {
  double gap = 0;
  double r2 = 0;
  std::vector<double> lags, acf;
};

// Gap estimate from the decay of the autocorrelation of xi_1 + ... + xi_n
// along one long stationary trajectory.
inline AutocorrelationGap particle_gap_mc(int n, int L, const ExcursionKernel<double>& ker, double T, double dt,
                                          std::uint64_t seed, double acf_hi = 0.5, double acf_lo = 0.05) {
  CrossingLaw<double> law(n, L, ker);
  Stream init(seed, 0xA11CE);
  ParticleSimulator sim(L, ker, sample_crossings(law, init), seed, 1);
  const long m = static_cast<long>(T / dt);
  std::vector<double> f(m);
  for (long k = 0; k < m; ++k) {
    const double tk = k * dt;
    while (sim.peek_next_time() <= tk) sim.step();
    double s = 0;
    for (int v : sim.positions()) s += v;
    f[k] = s;
  }
  const double mu = mean(f);
  for (double& v : f) v -= mu;
  double c0 = 0;
  for (double v : f) c0 += v * v;
  AutocorrelationGap out;
  std::vector<double> xs, ys;
  for (long lag = 1; lag < m / 10; ++lag) {
    double c = 0;
    for (long k = 0; k + lag < m; ++k) c += f[k] * f[k + lag];
    c /= c0 * static_cast<double>(m - lag) / m;
    out.lags.push_back(lag * dt);
    out.acf.push_back(c);
    if (c < acf_lo) break;
    if (c <= acf_hi) {
      xs.push_back(lag * dt);
      ys.push_back(std::log(c));
    }
  }
  if (xs.size() < 3) throw std::runtime_error("particle_gap_mc: autocorrelation window too short");
  const auto fit = linear_fit(xs, ys);
  out.gap = -fit.slope;
  out.r2 = fit.r2;
  return out;
}

// ---------------------------------------------------------------------------
// Coupling experiments.

struct CouplingStats {
  long runs = 0;
  long successes = 0;
  Interval p;             // Wilson interval
  double alpha_min = 1;   // smallest end-mass seen during the runs
  double bound = 0;       // reference lower bound (1/2 alpha^n for the hitting test)
};

inline std::vector<int> packed_right(int n, int L) {
  std::vector<int> x(n);
  for (int i = 0; i < n; ++i) x[i] = L - 2 * (n - i);
  return x;
}
inline std::vector<int> packed_left(int n, int L) {
  std::vector<int> x(n);
  for (int i = 0; i < n; ++i) x[i] = -L + 2 * (i + 1);
  return x;
}

// From the rightmost packed configuration, does the chain visit the leftmost
// packed configuration before time n^2?
inline CouplingStats epsilon1_experiment(int n, int L, const ExcursionKernel<double>& ker, long n_runs,
                                         std::uint64_t seed) {
  CouplingStats st;
  st.runs = n_runs;
  const auto target = packed_left(n, L);
  const double horizon = static_cast<double>(n) * n;
  for (long r = 0; r < n_runs; ++r) {
    ParticleSimulator sim(L, ker, packed_right(n, L), seed, static_cast<std::uint64_t>(r));
    bool hit = sim.positions() == target;
    while (!hit && sim.peek_next_time() <= horizon) {
      sim.step();
      st.alpha_min = std::min(st.alpha_min, sim.last_alpha());
      hit = sim.positions() == target;
    }
    st.successes += hit;
  }
  st.p = wilson_interval(st.successes, st.runs);
  st.bound = 0.5 * std::pow(st.alpha_min, n);
  return st;
}

// First ring of a single particle: lands at -L+2 with probability alpha.
inline CouplingStats first_ring_experiment(int L, const ExcursionKernel<double>& ker, long n_runs,
                                           std::uint64_t seed) {
  CouplingStats st;
  st.runs = n_runs;
  const auto law = conditional_particle_law(-L, L, ker);
  st.alpha_min = law.alpha;
  st.bound = law.alpha;
  for (long r = 0; r < n_runs; ++r) {
    ParticleSimulator sim(L, ker, {L - 2}, seed, static_cast<std::uint64_t>(r));
    sim.step();
    st.successes += sim.positions()[0] == -L + 2;
  }
  st.p = wilson_interval(st.successes, st.runs);
  return st;
}

namespace detail {

// Law of the last particle of a block of K particles on (a, b).
inline std::vector<double> last_particle_law(int a, int b, int K, const ConvolutionPowers<double>& W,
                                             const ExcursionKernel<double>& ker) {
  std::vector<double> p(b - a + 1, 0.0);
  double z = 0;
  for (int y = a + 2 * K; y <= b - 2; y += 2) {
    p[y - a] = W(K, y - a) * ker(b - y);
    z += p[y - a];
  }
  for (double& v : p) v /= z;
  return p;
}

inline int draw(const std::vector<double>& p, int offset, Stream& rs, int lo, int hi) {
  double tot = 0;
  for (int y = lo; y <= hi; ++y) tot += p[y - offset];
  if (!(tot > 0)) throw std::logic_error("block coupling: empty sampling range");
  double u = rs.uniform() * tot;
  int last = lo;
  for (int y = lo; y <= hi; ++y) {
    if (p[y - offset] <= 0) continue;
    last = y;
    u -= p[y - offset];
    if (u < 0) return y;
  }
  return last;
}

// Joint resampling of K particles on (a, b) given the last one is at y.
inline void fill_block(std::vector<int>& x, int first, int K, int a, int y, const ExcursionKernel<double>& ker,
                       Stream& rs) {
  x[first + K - 1] = y;
  if (K == 1) return;
  CrossingLaw<double> law(K - 1, (y - a) / 2, ker);
  auto inner = sample_crossings(law, rs);
  for (int i = 0; i < K - 1; ++i) x[first + i] = inner[i] + a + (y - a) / 2;
}

}  // namespace detail

// Block dynamics with Delta blocks of K particles, two copies driven by the
// same block clocks; one-step coalescence probability at time 1.
inline CouplingStats block_coupling_experiment(int K, int Delta, int L, const ExcursionKernel<double>& ker,
                                               long n_runs, std::uint64_t seed,
                                               std::vector<int> x0 = {}, std::vector<int> y0 = {}) {
  const int n = K * Delta;
  if (n > L - 1) throw std::invalid_argument("block_coupling_experiment: too many particles");
  if (x0.empty()) x0 = packed_right(n, L);
  if (y0.empty()) y0 = packed_left(n, L);
  ConvolutionPowers<double> W(ker, K, 2 * L);
  const double thr = std::cbrt(static_cast<double>(L));
  CouplingStats st;
  st.runs = n_runs;
  for (long r = 0; r < n_runs; ++r) {
    Stream rs(seed, static_cast<std::uint64_t>(r));
    std::vector<int> x = x0, y = y0;
    double t = rs.exponential(Delta);
    while (t <= 1.0) {
      const int blk = static_cast<int>(rs.below(Delta));
      const int first = blk * K, last = first + K - 1;
      const int ax = first > 0 ? x[first - 1] : -L, ay = first > 0 ? y[first - 1] : -L;
      const int bx = last + 1 < n ? x[last + 1] : L, by = last + 1 < n ? y[last + 1] : L;
      auto mirror_fill = [&](std::vector<int>& z, int a, int b, int v) {
        // first particle of the block at v, the others on (v, b)
        z[first] = v;
        if (K == 1) return;
        CrossingLaw<double> law(K - 1, (b - v) / 2, ker);
        auto inner = sample_crossings(law, rs);
        for (int i = 0; i < K - 1; ++i) z[first + 1 + i] = inner[i] + v + (b - v) / 2;
        (void)a;
      };
      if (ax == ay && bx == by) {
        const auto p = detail::last_particle_law(ax, bx, K, W, ker);
        const int v = detail::draw(p, ax, rs, ax + 2 * K, bx - 2);
        Stream copy = rs;
        detail::fill_block(x, first, K, ax, v, ker, rs);
        detail::fill_block(y, first, K, ay, v, ker, copy);
      } else if (ax == ay) {
        const int a = ax;
        const auto px = detail::last_particle_law(a, bx, K, W, ker);
        const auto py = detail::last_particle_law(a, by, K, W, ker);
        const int cut = a + 2 * static_cast<int>(std::floor(thr / 2));
        const int hi_x = bx - 2, hi_y = by - 2, lo = a + 2 * K;
        double pxl = 0, pyl = 0;
        for (int v = lo; v <= std::min(cut, hi_x); v += 2) pxl += px[v - a];
        for (int v = lo; v <= std::min(cut, hi_y); v += 2) pyl += py[v - a];
        const bool hx = rs.uniform() < pxl || pxl > 1 - 1e-12, hy = rs.uniform() < pyl || pyl > 1 - 1e-12;
        int vx, vy;
        if (hx && hy) {
          // maximal coupling of the two laws conditioned below the cut
          double overlap = 0;
          const int top = std::min({cut, hi_x, hi_y});
          for (int v = lo; v <= top; v += 2) overlap += std::min(px[v - a] / pxl, py[v - a] / pyl);
          if (rs.uniform() < overlap) {
            std::vector<double> m(px.size(), 0.0);
            for (int v = lo; v <= top; v += 2) m[v - a] = std::min(px[v - a] / pxl, py[v - a] / pyl);
            vx = vy = detail::draw(m, a, rs, lo, top);
          } else {
            std::vector<double> rx(px.size(), 0.0), ry(py.size(), 0.0);
            for (int v = lo; v <= std::min(cut, hi_x); v += 2)
              rx[v - a] = std::max(0.0, px[v - a] / pxl - (v <= top ? std::min(px[v - a] / pxl, py[v - a] / pyl) : 0.0));
            for (int v = lo; v <= std::min(cut, hi_y); v += 2)
              ry[v - a] = std::max(0.0, py[v - a] / pyl - (v <= top ? std::min(px[v - a] / pxl, py[v - a] / pyl) : 0.0));
            vx = detail::draw(rx, a, rs, lo, std::min(cut, hi_x));
            vy = detail::draw(ry, a, rs, lo, std::min(cut, hi_y));
          }
        } else {
          vx = hx ? detail::draw(px, a, rs, lo, std::min(cut, hi_x)) : detail::draw(px, a, rs, std::max(lo, cut + 2), hi_x);
          vy = hy ? detail::draw(py, a, rs, lo, std::min(cut, hi_y)) : detail::draw(py, a, rs, std::max(lo, cut + 2), hi_y);
        }
        if (vx == vy) {
          Stream copy = rs;
          detail::fill_block(x, first, K, a, vx, ker, rs);
          detail::fill_block(y, first, K, a, vy, ker, copy);
        } else {
          detail::fill_block(x, first, K, a, vx, ker, rs);
          detail::fill_block(y, first, K, a, vy, ker, rs);
        }
      } else if (bx == by) {
        // mirror image: couple the first particle of the block near b
        const int b = bx;
        auto first_law = [&](int a) {
          std::vector<double> p(b - a + 1, 0.0);
          double z = 0;
          for (int v = a + 2; v <= b - 2 * K; v += 2) {
            p[v - a] = ker(v - a) * W(K, b - v);
            z += p[v - a];
          }
          for (double& q : p) q /= z;
          return p;
        };
        const auto px = first_law(ax), py = first_law(ay);
        const int cut = b - 2 * static_cast<int>(std::floor(thr / 2));
        double pxh = 0, pyh = 0;
        for (int v = std::max(cut, ax + 2); v <= b - 2 * K; v += 2) pxh += px[v - ax];
        for (int v = std::max(cut, ay + 2); v <= b - 2 * K; v += 2) pyh += py[v - ay];
        const bool hx = rs.uniform() < pxh || pxh > 1 - 1e-12, hy = rs.uniform() < pyh || pyh > 1 - 1e-12;
        int vx, vy;
        const int lo_c = std::max({cut, ax + 2, ay + 2});
        if (hx && hy) {
          double overlap = 0;
          for (int v = lo_c; v <= b - 2 * K; v += 2) overlap += std::min(px[v - ax] / pxh, py[v - ay] / pyh);
          if (rs.uniform() < overlap) {
            std::vector<double> m(b - lo_c + 1, 0.0);
            for (int v = lo_c; v <= b - 2 * K; v += 2) m[v - lo_c] = std::min(px[v - ax] / pxh, py[v - ay] / pyh);
            vx = vy = detail::draw(m, lo_c, rs, lo_c, b - 2 * K);
          } else {
            std::vector<double> rx(px.size(), 0.0), ry(py.size(), 0.0);
            for (int v = std::max(cut, ax + 2); v <= b - 2 * K; v += 2)
              rx[v - ax] = std::max(0.0, px[v - ax] / pxh - (v >= lo_c ? std::min(px[v - ax] / pxh, py[v - ay] / pyh) : 0.0));
            for (int v = std::max(cut, ay + 2); v <= b - 2 * K; v += 2)
              ry[v - ay] = std::max(0.0, py[v - ay] / pyh - (v >= lo_c ? std::min(px[v - ax] / pxh, py[v - ay] / pyh) : 0.0));
            vx = detail::draw(rx, ax, rs, std::max(cut, ax + 2), b - 2 * K);
            vy = detail::draw(ry, ay, rs, std::max(cut, ay + 2), b - 2 * K);
          }
        } else {
          vx = hx ? detail::draw(px, ax, rs, std::max(cut, ax + 2), b - 2 * K)
                  : detail::draw(px, ax, rs, ax + 2, std::min(cut - 2, b - 2 * K));
          vy = hy ? detail::draw(py, ay, rs, std::max(cut, ay + 2), b - 2 * K)
                  : detail::draw(py, ay, rs, ay + 2, std::min(cut - 2, b - 2 * K));
        }
        if (vx == vy) {
          Stream copy = rs;
          mirror_fill(x, ax, b, vx);
          std::swap(rs, copy);
          mirror_fill(y, ay, b, vy);
          std::swap(rs, copy);
        } else {
          mirror_fill(x, ax, b, vx);
          mirror_fill(y, ay, b, vy);
        }
      } else {
        const auto px = detail::last_particle_law(ax, bx, K, W, ker);
        const auto py = detail::last_particle_law(ay, by, K, W, ker);
        detail::fill_block(x, first, K, ax, detail::draw(px, ax, rs, ax + 2 * K, bx - 2), ker, rs);
        detail::fill_block(y, first, K, ay, detail::draw(py, ay, rs, ay + 2 * K, by - 2), ker, rs);
      }
      t += rs.exponential(Delta);
    }
    st.successes += x == y;
  }
  st.p = wilson_interval(st.successes, st.runs);
  return st;
}

// ---------------------------------------------------------------------------
// Variational quotient for the sign-field chain.

inline double sigma_ramp(int plus, int L) { return std::clamp(4.0 * plus / L - 2.0, -1.0, 1.0); }

struct SigmaQuotient {
  int L = 0;
  double quotient = 0;       // D(f,f) / Var(f)
  double dirichlet = 0;
  double variance = 0;
  double middle_mass = 0;    // nu(L/4 <= zeta <= 3L/4)
  double stderr_quotient = 0;  // MC only
  long samples = 0;          // 0 for the exact backend
};

inline SigmaQuotient sigma_variational_quotient_exact(int L, double lambda, int L_max = 14) {
  if (L > L_max) throw capacity_error("sigma_variational_quotient: exact backend limited to L <= " + std::to_string(L_max));
  SigmaModel<double> model(L, lambda);
  const std::uint32_t N = 1u << L;
  std::vector<double> w(N);
  double z = 0;
  for (std::uint32_t b = 0; b < N; ++b) z += w[b] = model.weight(SignField::from_bits(L, b));
  double m = 0, m2 = 0, d = 0, mid = 0;
  for (std::uint32_t b = 0; b < N; ++b) {
    const double nu = w[b] / z;
    const int plus = __builtin_popcount(b);
    const double f = sigma_ramp(plus, L);
    m += nu * f;
    m2 += nu * f * f;
    if (4 * plus >= L && 4 * plus <= 3 * L) mid += nu;
    for (int i = 0; i < L; ++i) {
      const std::uint32_t c = b ^ (1u << i);
      const double df = sigma_ramp(__builtin_popcount(c), L) - f;
      if (df == 0) continue;
      const double p = w[c] / (w[b] + w[c]);
      d += nu * p * (1 - p) * df * df;
    }
  }
  SigmaQuotient q;
  q.L = L;
  q.dirichlet = d;
  q.variance = m2 - m * m;
  q.quotient = d / q.variance;
  q.middle_mass = mid;
  return q;
}

inline SigmaQuotient sigma_variational_quotient_mc(int L, double lambda, long n_mc, std::uint64_t seed) {
  SigmaModel<double> model(L, lambda);
  const auto marg = pi_marginals<double>(L, lambda, default_ell(L), zero_cap(L, default_co(lambda)));
  const auto ker = make_kernel<double>(2 * L, lambda);
  std::vector<std::optional<CrossingLaw<double>>> laws(L);
  Stream rs(seed, 0x5161);
  std::vector<double> fs, ds;
  double mid = 0;
  for (long s = 0; s < n_mc; ++s) {
    const int n = sample_index(marg.crossing_law, rs);
    std::vector<int> xi;
    if (n > 0) {
      if (!laws[n]) laws[n].emplace(n, L, ker);
      xi = sample_crossings(*laws[n], rs);
    }
    int sign = rs.uniform() < 0.5 ? 1 : -1;
    SignField sf{L, std::vector<int>(L)};
    std::size_t k = 0;
    for (int i = 0; i < L; ++i) {
      while (k < xi.size() && xi[k] < sf.site(i)) {
        sign = -sign;
        ++k;
      }
      sf.sign[i] = sign;
    }
    int plus = 0;
    for (int v : sf.sign) plus += v > 0;
    const double f = sigma_ramp(plus, L);
    const double wb = model.weight(sf);
    double d = 0;
    for (int i = 0; i < L; ++i) {
      const int plus2 = plus + (sf.sign[i] > 0 ? -1 : 1);
      const double df = sigma_ramp(plus2, L) - f;
      if (df == 0) continue;
      sf.sign[i] = -sf.sign[i];
      const double wc = model.weight(sf);
      sf.sign[i] = -sf.sign[i];
      const double p = wc / (wb + wc);
      d += p * (1 - p) * df * df;
    }
    if (4 * plus >= L && 4 * plus <= 3 * L) mid += 1;
    fs.push_back(f);
    ds.push_back(d);
  }
  SigmaQuotient q;
  q.L = L;
  q.samples = n_mc;
  q.dirichlet = mean(ds);
  const double sf = stddev(fs);
  q.variance = sf * sf;
  q.quotient = q.dirichlet / q.variance;
  q.middle_mass = mid / n_mc;
  // delta-method error from the Dirichlet term (dominant)
  q.stderr_quotient = stddev(ds) / std::sqrt(static_cast<double>(n_mc)) / q.variance;
  return q;
}

}  // namespace pinpoly
