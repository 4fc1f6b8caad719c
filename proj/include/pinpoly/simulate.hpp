#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "chain.hpp"
#include "path.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace pinpoly {

enum class Engine { naive, active_set };

struct DynamicsSpec {
  int L = 1;
  double lambda = 0.5;
  BoundaryPair bounds;
  std::optional<double> restrict_o;
  Engine engine = Engine::naive;

  static DynamicsSpec free(int L, double lambda, Engine e = Engine::naive) {
    return {L, lambda, BoundaryPair::free(L), {}, e};
  }
};

struct State {
  int L = 0;
  std::vector<int> h;  // heights at p = 0..2L
  std::uint64_t mask = 0;

  State() = default;
  explicit State(const Path& p) : L(p.L()), h(p.heights()), mask(p.mask()) {}
  Path path() const { return Path::from_heights(h); }
  bool operator==(const State& o) const { return h == o.h; }
};

// Heat-bath move rule with constraint checks.
class Dynamics {
 public:
  explicit Dynamics(DynamicsSpec spec) : s_(std::move(spec)) {
    if (s_.L < 1) throw std::invalid_argument("Dynamics: L must be >= 1");
    if (!(s_.lambda > 0)) throw std::invalid_argument("Dynamics: lambda must be > 0");
    if (s_.bounds.floor.L() != s_.L || s_.bounds.ceil.L() != s_.L)
      throw std::invalid_argument("Dynamics: bounds have the wrong length");
    if (!leq(s_.bounds.floor, s_.bounds.ceil)) throw std::invalid_argument("Dynamics: floor above ceiling");
    if (s_.restrict_o) cap_ = zero_cap(s_.L, *s_.restrict_o);
  }

  const DynamicsSpec& spec() const { return s_; }
  int L() const { return s_.L; }

  bool admissible(const Path& p) const {
    if (p.L() != s_.L || !leq(s_.bounds.floor, p) || !leq(p, s_.bounds.ceil)) return false;
    return !cap_ || in_omega_o(path_stats(p), *cap_);
  }

  // Height site p would take given the shared uniform u (current value if null).
  int proposal(const State& s, int p, double u) const {
    const int hl = s.h[p - 1];
    if (hl != s.h[p + 1]) return s.h[p];
    return u < theta_down(hl, s_.lambda) ? hl - 1 : hl + 1;
  }

  bool allowed(const State& s, int p, int target) const {
    if (target < s_.bounds.floor.at(p) || target > s_.bounds.ceil.at(p)) return false;
    if (!cap_) return true;
    std::vector<int> h = s.h;
    h[p] = target;
    return in_omega_o(path_stats(Path::from_heights(h)), *cap_);
  }

  static void apply(State& s, int p, int target) {
    s.h[p] = target;
    const int L = s.L;
    s.mask ^= (std::uint64_t{1} << (2 * L - p)) ^ (std::uint64_t{1} << (2 * L - 1 - p));
  }

  // One heat-bath ring at p; returns true iff the configuration changed.
  bool ring(State& s, int p, double u) const {
    const int t = proposal(s, p, u);
    if (t == s.h[p] || !allowed(s, p, t)) return false;
    apply(s, p, t);
    return true;
  }

 private:
  DynamicsSpec s_;
  std::optional<int> cap_;
};

// Sites where a ring can change the path (local extrema).
class ActiveSet {
 public:
  explicit ActiveSet(const State& s) : where_(2 * s.L + 1, -1) {
    for (int p = 1; p < 2 * s.L; ++p) refresh(s, p);
  }
  int size() const { return static_cast<int>(sites_.size()); }
  int operator[](int k) const { return sites_[k]; }
  void refresh(const State& s, int p) {
    if (p < 1 || p >= 2 * s.L) return;
    const bool on = s.h[p - 1] == s.h[p + 1];
    if (on && where_[p] < 0) {
      where_[p] = static_cast<int>(sites_.size());
      sites_.push_back(p);
    } else if (!on && where_[p] >= 0) {
      const int k = where_[p], last = sites_.back();
      sites_[k] = last;
      where_[last] = k;
      sites_.pop_back();
      where_[p] = -1;
    }
  }

 private:
  std::vector<int> sites_;
  std::vector<int> where_;
};

// Censoring: time windows [t0, t1) with the sites (p = x + L) whose updates are kept.
struct CensorWindow {
  double t0 = 0, t1 = 0;
  std::vector<char> allowed;
};

struct Schedule {
  std::vector<CensorWindow> windows;

  void validate(int L) const {
    double t = 0;
    for (std::size_t k = 0; k < windows.size(); ++k) {
      const auto& w = windows[k];
      if (static_cast<int>(w.allowed.size()) != 2 * L + 1)
        throw std::invalid_argument("Schedule: site mask has the wrong length");
      if (!(w.t1 > w.t0)) throw std::invalid_argument("Schedule: empty window");
      if (w.t0 < t) throw std::invalid_argument("Schedule: overlapping windows");
      if (w.t0 > t) throw std::invalid_argument("Schedule: windows leave a gap");
      t = w.t1;
    }
  }
  double end() const { return windows.empty() ? 0.0 : windows.back().t1; }

  // Rings after the last window are not censored.
  bool allows(double t, int p) const {
    for (const auto& w : windows)
      if (t >= w.t0 && t < w.t1) return w.allowed[p];
    return true;
  }
};

inline std::vector<char> site_range(int L, int x_lo, int x_hi) {
  std::vector<char> a(2 * L + 1, 0);
  for (int x = std::max(x_lo, -L); x <= std::min(x_hi, L); ++x) a[x + L] = 1;
  return a;
}

inline Schedule schedule_all(int L, double T) { return {{{0.0, T, std::vector<char>(2 * L + 1, 1)}}}; }

// Three-phase schedule: I2 for T2, then I1 u I3 for T1, then I2 for T2.
inline Schedule muretto_schedule(int L, int ell, double T2, double T1) {
  const auto i2 = site_range(L, -L + ell, L - ell);
  auto i13 = site_range(L, -L, -L + ell * ell - 1);
  const auto i3 = site_range(L, L - ell * ell, L);
  for (int p = 0; p <= 2 * L; ++p) i13[p] = i13[p] || i3[p];
  return {{{0.0, T2, i2}, {T2, T2 + T1, i13}, {T2 + T1, 2 * T2 + T1, i2}}};
}

// Lines "t_start,t_end,ranges" with ranges "all" or "a:b;c:d" in x coordinates.
inline Schedule parse_schedule(std::istream& in, int L) {
  Schedule s;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string a, b, r;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, r))
      throw std::invalid_argument("parse_schedule: malformed line: " + line);
    CensorWindow w{std::stod(a), std::stod(b), std::vector<char>(2 * L + 1, 0)};
    r.erase(std::remove_if(r.begin(), r.end(), ::isspace), r.end());
    if (r == "all") {
      std::fill(w.allowed.begin(), w.allowed.end(), 1);
    } else if (!r.empty() && r != "none") {
      std::stringstream rs(r);
      std::string piece;
      while (std::getline(rs, piece, ';')) {
        const auto c = piece.find(':');
        const int lo = std::stoi(piece.substr(0, c));
        const int hi = c == std::string::npos ? lo : std::stoi(piece.substr(c + 1));
        const auto part = site_range(L, lo, hi);
        for (int p = 0; p <= 2 * L; ++p) w.allowed[p] = w.allowed[p] || part[p];
      }
    }
    s.windows.push_back(std::move(w));
  }
  s.validate(L);
  return s;
}

using Observable = std::function<double(const State&)>;
using StatePredicate = std::function<bool(const State&)>;

struct SimOptions {
  std::vector<double> sample_times;  // nondecreasing
  std::vector<Observable> observables;
  StatePredicate target;   // stop on the first visit
  StatePredicate outside;  // accumulate time spent where this holds
  const Schedule* schedule = nullptr;
  bool record_events = false;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;
  long events = 0;  // clock rings processed
  long moves = 0;   // rings that changed the path
  std::vector<double> sample_times;
  std::vector<std::vector<double>> samples;  // [time][observable]
  std::vector<double> event_times;           // moves only
  std::vector<int> event_sites;              // x coordinate of each move
  bool hit = false;
  double hit_time = std::numeric_limits<double>::infinity();
  bool censored = false;  // target given but not reached within the horizon
  double occupation = 0;
  std::vector<long> site_flips;  // by p
  double end_time = 0;
  Path final_state;
};

inline TrajectoryRecord simulate_heatbath(const DynamicsSpec& spec, const Path& eta0, double horizon,
                                          std::uint64_t seed, const SimOptions& opt = {},
                                          std::uint64_t replica = 0) {
  Dynamics dyn(spec);
  if (!dyn.admissible(eta0)) throw std::invalid_argument("simulate_heatbath: initial path violates the constraints");
  if (opt.schedule) opt.schedule->validate(spec.L);
  const int L = spec.L;
  State s(eta0);
  Stream rs(seed, replica);
  std::optional<ActiveSet> act;
  if (spec.engine == Engine::active_set) act.emplace(s);
  TrajectoryRecord r;
  r.seed = seed;
  r.replica = replica;
  r.sample_times = opt.sample_times;
  r.samples.reserve(opt.sample_times.size());
  r.site_flips.assign(2 * L + 1, 0);
  std::size_t si = 0;
  double t = 0;
  auto sample_until = [&](double t_end) {
    while (si < opt.sample_times.size() && opt.sample_times[si] < t_end && opt.sample_times[si] <= horizon) {
      std::vector<double> row;
      for (const auto& f : opt.observables) row.push_back(f(s));
      r.samples.push_back(std::move(row));
      ++si;
    }
  };
  if (opt.target && opt.target(s)) {
    r.hit = true;
    r.hit_time = 0;
  }
  while (!r.hit) {
    const int nsites = act ? act->size() : 2 * L - 1;
    const double t_next = nsites > 0 ? t + rs.exponential(nsites) : std::numeric_limits<double>::infinity();
    sample_until(std::min(t_next, std::nextafter(horizon, INFINITY)));
    if (opt.outside && opt.outside(s)) r.occupation += std::min(t_next, horizon) - t;
    if (t_next > horizon) {
      t = horizon;
      break;
    }
    t = t_next;
    const int p = act ? (*act)[static_cast<int>(rs.below(nsites))] : 1 + static_cast<int>(rs.below(nsites));
    const double u = rs.uniform();
    ++r.events;
    if (opt.schedule && !opt.schedule->allows(t, p)) continue;
    if (!dyn.ring(s, p, u)) continue;
    ++r.moves;
    ++r.site_flips[p];
    if (act) {
      act->refresh(s, p - 1);
      act->refresh(s, p + 1);
    }
    if (opt.record_events) {
      r.event_times.push_back(t);
      r.event_sites.push_back(p - L);
    }
    if (opt.target && opt.target(s)) {
      r.hit = true;
      r.hit_time = t;
    }
  }
  if (r.hit) {
    // remaining sample times see the state at the hitting time
    sample_until(std::numeric_limits<double>::infinity());
  }
  r.censored = opt.target && !r.hit;
  r.end_time = r.hit ? r.hit_time : t;
  r.final_state = s.path();
  return r;
}

struct order_violation : std::logic_error {
  using std::logic_error::logic_error;
};

struct CouplingRun {
  std::vector<Path> initial;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::vector<double> sample_times;
  std::vector<char> ordered;    // at each sample time, all initially ordered pairs still ordered
  std::vector<char> coalesced;  // at each sample time, all replicas equal
  double coalescence_time = std::numeric_limits<double>::infinity();
  long events = 0;
  long order_checks = 0;
  std::vector<Path> final_states;
};

// All replicas share the clock, the site and the uniform of every ring.
inline CouplingRun grand_coupling_run(const DynamicsSpec& spec, const std::vector<Path>& initial, double horizon,
                                      std::uint64_t seed, std::uint64_t stream = 0,
                                      const std::vector<double>& sample_times = {},
                                      bool stop_on_coalescence = false, long max_events = -1) {
  Dynamics dyn(spec);
  const int L = spec.L;
  const int R = static_cast<int>(initial.size());
  if (R == 0) throw std::invalid_argument("grand_coupling_run: no initial conditions");
  for (const auto& p : initial)
    if (!dyn.admissible(p)) throw std::invalid_argument("grand_coupling_run: initial path violates the constraints");
  std::vector<State> st;
  for (const auto& p : initial) st.emplace_back(p);
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < R; ++a)
    for (int b = 0; b < R; ++b)
      if (a != b && leq(initial[a], initial[b])) pairs.emplace_back(a, b);
  int ndiff = 0;  // replicas differing from replica 0
  for (int a = 1; a < R; ++a) ndiff += st[a].mask != st[0].mask;

  CouplingRun run;
  run.initial = initial;
  run.seed = seed;
  run.stream = stream;
  run.sample_times = sample_times;
  if (ndiff == 0) run.coalescence_time = 0;
  Stream rs(seed, stream);
  std::size_t si = 0;
  double t = 0;
  auto sample_until = [&](double t_end) {
    while (si < sample_times.size() && sample_times[si] < t_end && sample_times[si] <= horizon) {
      run.ordered.push_back(1);  // violations throw, so order holds whenever we get here
      run.coalesced.push_back(ndiff == 0);
      ++si;
    }
  };
  while (true) {
    if (stop_on_coalescence && ndiff == 0) break;
    if (max_events >= 0 && run.events >= max_events) break;
    const double t_next = t + rs.exponential(2 * L - 1);
    sample_until(std::min(t_next, std::nextafter(horizon, INFINITY)));
    if (t_next > horizon) break;
    t = t_next;
    const int p = 1 + static_cast<int>(rs.below(2 * L - 1));
    const double u = rs.uniform();
    ++run.events;
    for (auto& s : st) dyn.ring(s, p, u);
    for (auto [a, b] : pairs) {
      ++run.order_checks;
      if (st[a].h[p] > st[b].h[p])
        throw order_violation("grand_coupling_run: order violated at x = " + std::to_string(p - L) +
                              ", t = " + std::to_string(t));
    }
    if (R > 1) {
      ndiff = 0;
      for (int a = 1; a < R; ++a)
        if (st[a].mask != st[0].mask) ++ndiff;
      if (ndiff == 0 && !std::isfinite(run.coalescence_time)) run.coalescence_time = t;
    }
  }
  sample_until(std::numeric_limits<double>::infinity());
  for (const auto& s : st) run.final_states.push_back(s.path());
  return run;
}

// Runs fn(k) for k in [0, n) on `jobs` threads; results must not depend on scheduling.
template <class F>
void parallel_for(int n, int jobs, F&& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex m;
  for (int j = 0; j < jobs; ++j)
    pool.emplace_back([&, j] {
      try {
        for (int k = j; k < n; k += jobs) fn(k);
      } catch (...) {
        std::lock_guard<std::mutex> g(m);
        if (!err) err = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

struct HittingSample {
  std::vector<double> tau;         // hitting time, or horizon when censored
  std::vector<char> censored;
  std::vector<double> occupation;  // time spent in `outside` before tau
  int censored_count = 0;
  double tau_mean = 0;             // over uncensored runs
  double occupation_mean = 0;
  KsResult ks;                     // tau / mean(tau) against Exp(1), uncensored runs
};

inline HittingSample hitting_time_sample(const DynamicsSpec& spec, const Path& eta0, const StatePredicate& target,
                                         int n_runs, double horizon, std::uint64_t seed,
                                         const StatePredicate& outside = nullptr, int jobs = 1) {
  if (!target) throw std::invalid_argument("hitting_time_sample: target required");
  HittingSample h;
  h.tau.resize(n_runs);
  h.censored.resize(n_runs);
  h.occupation.resize(n_runs);
  parallel_for(n_runs, jobs, [&](int k) {
    SimOptions o;
    o.target = target;
    o.outside = outside;
    auto r = simulate_heatbath(spec, eta0, horizon, seed, o, static_cast<std::uint64_t>(k));
    h.tau[k] = r.hit ? r.hit_time : horizon;
    h.censored[k] = r.censored;
    h.occupation[k] = r.occupation;
  });
  std::vector<double> ok;
  for (int k = 0; k < n_runs; ++k) {
    if (h.censored[k]) ++h.censored_count;
    else ok.push_back(h.tau[k]);
  }
  h.tau_mean = mean(ok);
  h.occupation_mean = mean(h.occupation);
  if (ok.size() >= 2 && h.tau_mean > 0) {
    for (double& v : ok) v /= h.tau_mean;
    h.ks = ks_one_sample(ok, [](double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-x); });
  }
  return h;
}

struct GapEstimate {
  double gap = 0;
  double lo = 0, hi = 0;  // bootstrap 95% band
  std::vector<double> times;
  std::vector<double> p_neq;
  int tail_points = 0;
  double r2 = 0;
  int unfinished = 0;  // pairs not coalesced within the horizon
};

// Fit of log P(not coalesced by t) on its tail, for the coupled pair (max, min).
inline GapEstimate gap_from_coalescence_times(const std::vector<double>& T, double horizon, std::uint64_t seed,
                                              int grid = 60, int min_count = 30, int boot = 200) {
  const int n = static_cast<int>(T.size());
  auto fit = [&](const std::vector<double>& times, GapEstimate* out) -> std::optional<LinearFit> {
    std::vector<double> sorted(times);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> xs, ys, all_t, all_p;
    for (int k = 1; k <= grid; ++k) {
      const double t = horizon * k / grid;
      const long cnt = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t);
      all_t.push_back(t);
      all_p.push_back(static_cast<double>(cnt) / n);
      if (cnt >= min_count && cnt <= n / 2) {
        xs.push_back(t);
        ys.push_back(std::log(static_cast<double>(cnt) / n));
      }
    }
    if (out) {
      out->times = all_t;
      out->p_neq = all_p;
      out->tail_points = static_cast<int>(xs.size());
    }
    if (xs.size() < 4) return std::nullopt;
    return linear_fit(xs, ys);
  };
  GapEstimate g;
  for (double v : T) g.unfinished += !std::isfinite(v);
  auto f = fit(T, &g);
  if (!f) throw std::runtime_error("gap_estimate_from_coalescence: no linear tail detected (extend horizon or runs)");
  g.gap = -f->slope;
  g.r2 = f->r2;
  Stream rs(seed, 0xB007);
  std::vector<double> est;
  for (int b = 0; b < boot; ++b) {
    std::vector<double> rsmp(n);
    for (int k = 0; k < n; ++k) rsmp[k] = T[rs.below(n)];
    if (auto fb = fit(rsmp, nullptr)) est.push_back(-fb->slope);
  }
  std::sort(est.begin(), est.end());
  if (!est.empty()) {
    g.lo = est[static_cast<std::size_t>(0.025 * (est.size() - 1))];
    g.hi = est[static_cast<std::size_t>(0.975 * (est.size() - 1))];
  }
  return g;
}

inline GapEstimate gap_estimate_from_coalescence(const DynamicsSpec& spec, double horizon, int n_runs,
                                                 std::uint64_t seed, int jobs = 1) {
  std::vector<double> T(n_runs);
  const Path top = spec.bounds.ceil, bottom = spec.bounds.floor;
  parallel_for(n_runs, jobs, [&](int k) {
    auto run = grand_coupling_run(spec, {top, bottom}, horizon, seed, static_cast<std::uint64_t>(k), {}, true);
    T[k] = run.coalescence_time;
  });
  return gap_from_coalescence_times(T, horizon, seed);
}

// Index drawn from unnormalized weights.
inline int sample_index(const std::vector<double>& w, Stream& rs) {
  double tot = 0;
  for (double v : w) tot += v;
  double u = rs.uniform() * tot;
  for (std::size_t i = 0; i < w.size(); ++i) {
    u -= w[i];
    if (u < 0) return static_cast<int>(i);
  }
  return static_cast<int>(w.size()) - 1;
}

}  // namespace pinpoly
