#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "chain.hpp"
#include "linalg.hpp"

namespace pinpoly {

enum class Mode { automatic, dense, sparse };

inline constexpr int dense_capacity = 20000;
inline constexpr int dense_auto_limit = 2000;

inline bool use_dense(Mode mode, int n) {
  if (mode == Mode::dense) {
    if (n > dense_capacity)
      throw capacity_error("dense eigensolve limited to " + std::to_string(dense_capacity) +
                           " states, got " + std::to_string(n));
    return true;
  }
  if (mode == Mode::sparse) return n < 16;  // too small for a Krylov basis
  return n <= dense_auto_limit;
}

// D^{1/2} (-L) D^{-1/2} on the states with keep[i] (all if keep is null);
// rates into dropped states count as killing.
inline Csr symmetrized(const ReversibleChain& c, const std::vector<char>* keep = nullptr,
                       std::vector<int>* index_map = nullptr) {
  const int n = c.size();
  std::vector<int> idx(n, -1);
  int m = 0;
  for (int i = 0; i < n; ++i)
    if (!keep || (*keep)[i]) idx[i] = m++;
  const auto exit = c.exit_rates();
  Csr H;
  H.n = m;
  H.ptr.assign(1, 0);
  for (int i = 0; i < n; ++i) {
    if (idx[i] < 0) continue;
    std::vector<std::pair<int, double>> row{{idx[i], exit[i]}};
    for (int k = c.rates.ptr[i]; k < c.rates.ptr[i + 1]; ++k) {
      const int j = c.rates.col[k];
      if (idx[j] < 0) continue;
      row.emplace_back(idx[j], -std::sqrt(c.rates.val[k] * c.rate(j, i)));
    }
    std::sort(row.begin(), row.end());
    for (auto& [j, v] : row) {
      H.col.push_back(j);
      H.val.push_back(v);
    }
    H.ptr.push_back(static_cast<int>(H.col.size()));
  }
  if (index_map) *index_map = idx;
  return H;
}

inline Eigen::MatrixXd to_dense(const Csr& H) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(H.n, H.n);
  for (int i = 0; i < H.n; ++i)
    for (int k = H.ptr[i]; k < H.ptr[i + 1]; ++k) A(i, H.col[k]) = H.val[k];
  return A;
}

// Off-diagonal rates among kept states plus total exit rates (for evolution).
inline std::pair<Csr, std::vector<double>> sub_generator(const ReversibleChain& c,
                                                         const std::vector<char>* keep = nullptr) {
  const int n = c.size();
  std::vector<int> idx(n, -1);
  int m = 0;
  for (int i = 0; i < n; ++i)
    if (!keep || (*keep)[i]) idx[i] = m++;
  const auto exit = c.exit_rates();
  Csr Q;
  Q.n = m;
  std::vector<double> e;
  for (int i = 0; i < n; ++i) {
    if (idx[i] < 0) continue;
    e.push_back(exit[i]);
    for (int k = c.rates.ptr[i]; k < c.rates.ptr[i + 1]; ++k)
      if (idx[c.rates.col[k]] >= 0) {
        Q.col.push_back(idx[c.rates.col[k]]);
        Q.val.push_back(c.rates.val[k]);
      }
    Q.ptr.push_back(static_cast<int>(Q.col.size()));
  }
  return {std::move(Q), std::move(e)};
}

struct SpectralResult {
  double gap = 0;
  double t_rel = 0;
  std::vector<double> g;  // unit norm in L^2(pi)
  std::vector<double> pi;
  double residual = 0;    // |H phi - gap phi| / |H|
  bool degenerate = false;
  bool full = false;
  Eigen::VectorXd values;   // all eigenvalues of -L (full mode)
  Eigen::MatrixXd vectors;  // symmetrized eigenvectors (full mode)
  std::vector<double> lowest;  // smallest nonzero eigenvalues found
};

inline SpectralResult solve_spectrum(const ReversibleChain& c, Mode mode = Mode::automatic,
                                     double tol = 1e-12) {
  const int n = c.size();
  if (n < 2) throw std::invalid_argument("solve_spectrum: need at least two states");
  SpectralResult r;
  r.pi = c.pi();
  Eigen::VectorXd sq(n);
  for (int i = 0; i < n; ++i) sq[i] = std::sqrt(r.pi[i]);
  const Csr H = symmetrized(c);
  double hnorm = 0;
  for (int i = 0; i < n; ++i) {
    double s = 0;
    for (int k = H.ptr[i]; k < H.ptr[i + 1]; ++k) s += std::fabs(H.val[k]);
    hnorm = std::max(hnorm, s);
  }
  Eigen::MatrixXd space;  // eigenvectors spanning the gap eigenspace
  if (use_dense(mode, n)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_dense(H));
    if (es.info() != Eigen::Success) throw convergence_error("solve_spectrum: dense eigensolver failed");
    r.full = true;
    r.values = es.eigenvalues();
    r.vectors = es.eigenvectors();
    r.gap = r.values[1];
    for (int k = 1; k < std::min(n, 6); ++k) r.lowest.push_back(r.values[k]);
    int mult = 1;
    while (1 + mult < n && r.values[1 + mult] - r.gap <= 1e-9 * std::max(1.0, r.gap)) ++mult;
    space = r.vectors.middleCols(1, mult);
  } else {
    const int nev = std::min(4, n - 2);
    Eigen::MatrixXd defl = sq;
    auto ep = smallest_eigenpairs([&](const double* x, double* y) { H.multiply(x, y); }, n, nev, defl,
                                  tol);
    r.gap = ep.values[0];
    r.lowest = ep.values;
    int mult = 1;
    while (mult < nev && ep.values[mult] - r.gap <= 1e-9 * std::max(1.0, r.gap)) ++mult;
    space = ep.vectors.leftCols(mult);
  }
  if (!(r.gap > 0)) throw convergence_error("solve_spectrum: nonpositive gap (reducible chain?)");
  r.t_rel = 1.0 / r.gap;
  Eigen::VectorXd phi = space.col(0);
  if (space.cols() > 1) r.degenerate = true;
  if (space.cols() > 1 && !c.mirror.empty()) {
    // without a symmetry g is just one member of the eigenspace
    double best = -1;
    for (int k = 0; k < space.cols(); ++k) {
      Eigen::VectorXd a(n);
      for (int i = 0; i < n; ++i) a[i] = 0.5 * (space(i, k) - space(c.mirror[i], k));
      if (a.norm() > best) {
        best = a.norm();
        phi = a;
      }
    }
    if (best < 1e-6) throw std::runtime_error("solve_spectrum: no antisymmetric member in gap eigenspace");
  }
  phi.normalize();
  Eigen::VectorXd hp(n);
  H.multiply(phi.data(), hp.data());
  r.residual = (hp - r.gap * phi).norm() / std::max(hnorm, 1e-300);
  r.g.resize(n);
  for (int i = 0; i < n; ++i) r.g[i] = phi[i] / sq[i];
  const int top = c.top >= 0 ? c.top : 0;
  if (r.g[top] < 0)
    for (double& v : r.g) v = -v;
  return r;
}

// Exact time evolution of (signed) row vectors: spectral expansion when the
// full decomposition is available, uniformization otherwise.
class Semigroup {
 public:
  Semigroup(const ReversibleChain& c, const SpectralResult* spec = nullptr)
      : chain_(c), spec_(spec && spec->full ? spec : nullptr) {
    if (!spec_) {
      auto [Q, e] = sub_generator(c);
      Q_ = std::make_unique<Csr>(std::move(Q));
      uni_ = std::make_unique<Uniformizer>(*Q_, std::move(e));
    }
  }

  bool exact_spectral() const { return spec_ != nullptr; }

  // emit(i, mu P_{t_i}); with `centered`, the stationary component is
  // removed (mu P_t - mu(1) pi), which avoids cancellation in the dense path.
  void evolve(const std::vector<double>& mu, const std::vector<double>& times,
              const std::function<void(int, const std::vector<double>&)>& emit, bool centered = false) const {
    const int n = chain_.size();
    if (spec_) {
      const auto& V = spec_->vectors;
      Eigen::VectorXd x(n);
      for (int i = 0; i < n; ++i) x[i] = mu[i] / std::sqrt(spec_->pi[i]);
      const Eigen::VectorXd coef = V.transpose() * x;
      std::vector<double> out(n);
      for (std::size_t q = 0; q < times.size(); ++q) {
        Eigen::VectorXd d(n);
        for (int k = 0; k < n; ++k) d[k] = (centered && k == 0) ? 0.0 : std::exp(-spec_->values[k] * times[q]) * coef[k];
        if (!centered) d[0] = coef[0];
        const Eigen::VectorXd y = V * d;
        for (int i = 0; i < n; ++i) out[i] = y[i] * std::sqrt(spec_->pi[i]);
        emit(static_cast<int>(q), out);
      }
      return;
    }
    const auto pi = chain_.pi();
    double mass = 0;
    for (double v : mu) mass += v;
    uni_->evolve(mu, times, [&](int q, const std::vector<double>& v) {
      if (!centered) return emit(q, v);
      std::vector<double> d(v);
      for (int i = 0; i < n; ++i) d[i] -= mass * pi[i];
      emit(q, d);
    });
  }

  std::vector<std::vector<double>> at(const std::vector<double>& mu, const std::vector<double>& times,
                                      bool centered = false) const {
    std::vector<std::vector<double>> out(times.size());
    evolve(mu, times, [&](int q, const std::vector<double>& v) { out[q] = v; }, centered);
    return out;
  }

 private:
  const ReversibleChain& chain_;
  const SpectralResult* spec_;
  std::unique_ptr<Csr> Q_;
  std::unique_ptr<Uniformizer> uni_;
};

inline double half_l1(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += std::fabs(x);
  return 0.5 * s;
}

inline std::vector<double> point_mass(int n, int i) {
  std::vector<double> v(n, 0.0);
  v[i] = 1.0;
  return v;
}

// t -> ||mu P_t - pi|| on a time grid.
inline std::vector<double> tv_curve(const Semigroup& sg, const std::vector<double>& mu,
                                    const std::vector<double>& times) {
  std::vector<double> out(times.size());
  sg.evolve(mu, times, [&](int q, const std::vector<double>& d) { out[q] = half_l1(d); }, true);
  return out;
}

// First time the TV distance from mu drops to delta. The chain is advanced
// in steps of `step`; the bracket containing the crossing is bisected from
// the distribution at its left end.
inline double mixing_time(const Semigroup& sg, const std::vector<double>& mu, double delta, double horizon,
                          double rtol = 1e-6, double step = 0) {
  if (step <= 0) step = horizon / 64;
  auto advance = [&](const std::vector<double>& v, double s) { return sg.at(v, {s})[0]; };
  auto dist = [&](const std::vector<double>& v) { return tv_curve(sg, v, {0.0})[0]; };
  std::vector<double> v = mu;
  double t = 0;
  if (dist(v) <= delta) return 0;
  for (;;) {
    if (t >= horizon) throw std::runtime_error("mixing_time: distance stays above delta within the horizon");
    const double h = std::min(step, horizon - t);
    auto w = advance(v, h);
    if (dist(w) > delta) {
      v = std::move(w);
      t += h;
      continue;
    }
    double lo = 0, hi = h;
    while (hi - lo > rtol * (t + hi)) {
      const double mid = 0.5 * (lo + hi);
      if (dist(advance(v, mid)) <= delta) hi = mid;
      else lo = mid;
    }
    return t + hi;
  }
}

struct MixingReport {
  std::vector<double> times;
  std::vector<double> tv;
  double t_mix = 0;   // max over the given starts
  double t_rel = 0;
  double pi_min = 0;
  bool sandwich = false;  // T_rel <= T_mix <= (1 - log pi_min) T_rel
};

inline MixingReport tv_and_mixing(const ReversibleChain& c, const SpectralResult& s,
                                  const std::vector<int>& starts, double delta,
                                  const std::vector<double>& times, double horizon = 0) {
  Semigroup sg(c, &s);
  MixingReport r;
  r.t_rel = s.t_rel;
  r.pi_min = *std::min_element(s.pi.begin(), s.pi.end());
  r.times = times;
  if (!starts.empty()) r.tv = tv_curve(sg, point_mass(c.size(), starts[0]), times);
  if (horizon <= 0) horizon = s.t_rel * (1.0 - std::log(r.pi_min)) * 1.5 + 1.0;
  for (int st : starts) r.t_mix = std::max(r.t_mix, mixing_time(sg, point_mass(c.size(), st), delta, horizon, 1e-6, s.t_rel / 4));
  r.sandwich = r.t_rel <= r.t_mix * (1 + 1e-9) && r.t_mix <= (1.0 - std::log(r.pi_min)) * r.t_rel;
  return r;
}

struct KilledAnalysis {
  std::vector<char> in_gamma;
  double gamma = 0;
  std::vector<double> g_gamma;   // positive off Gamma, zero on Gamma
  std::vector<double> nu_gamma;  // quasi-stationary distribution
  std::vector<double> hitting;   // E^eta[tau_Gamma]
  double pi_gamma = 0;
  double residual = 0;
};

inline KilledAnalysis qsd_analysis(const ReversibleChain& c, const std::vector<char>& in_gamma,
                                   Mode mode = Mode::automatic) {
  const int n = c.size();
  int ng = 0;
  for (char v : in_gamma) ng += v ? 1 : 0;
  if (ng == 0 || ng == n) throw std::invalid_argument("qsd_analysis: Gamma must be a proper nonempty subset");
  std::vector<char> keep(n);
  for (int i = 0; i < n; ++i) keep[i] = !in_gamma[i];
  std::vector<int> idx;
  const Csr H = symmetrized(c, &keep, &idx);
  const int m = H.n;
  const auto pi = c.pi();
  KilledAnalysis k;
  k.in_gamma = in_gamma;
  for (int i = 0; i < n; ++i)
    if (in_gamma[i]) k.pi_gamma += pi[i];
  Eigen::VectorXd sq(m);
  for (int i = 0; i < n; ++i)
    if (idx[i] >= 0) sq[idx[i]] = std::sqrt(pi[i]);
  Eigen::VectorXd phi, u;
  if (m == 1) {
    k.gamma = H.val[0];
    phi = Eigen::VectorXd::Ones(1);
    u = Eigen::VectorXd::Constant(1, 1.0 / k.gamma);
  } else if (use_dense(mode, m)) {
    const Eigen::MatrixXd A = to_dense(H);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    k.gamma = es.eigenvalues()[0];
    phi = es.eigenvectors().col(0);
    u = A.ldlt().solve(sq).cwiseQuotient(sq);
  } else {
    auto ep = smallest_eigenpairs([&](const double* x, double* y) { H.multiply(x, y); }, m, 1,
                                  Eigen::MatrixXd(m, 0), 1e-13);
    k.gamma = ep.values[0];
    phi = ep.vectors.col(0);
    std::vector<double> diag(m), rhs(m);
    for (int i = 0; i < m; ++i) {
      rhs[i] = sq[i];
      for (int q = H.ptr[i]; q < H.ptr[i + 1]; ++q)
        if (H.col[q] == i) diag[i] = H.val[q];
    }
    auto y = conjugate_gradient([&](const double* x, double* yy) { H.multiply(x, yy); }, diag, rhs, 1e-14);
    u = Eigen::Map<Eigen::VectorXd>(y.data(), m).cwiseQuotient(sq);
  }
  if (phi.sum() < 0) phi = -phi;
  Eigen::VectorXd hp(m);
  H.multiply(phi.data(), hp.data());
  k.residual = (hp - k.gamma * phi).norm();
  k.g_gamma.assign(n, 0.0);
  k.nu_gamma.assign(n, 0.0);
  k.hitting.assign(n, 0.0);
  double z = 0;
  for (int i = 0; i < n; ++i) {
    if (idx[i] < 0) continue;
    k.g_gamma[i] = phi[idx[i]] / sq[idx[i]];
    k.nu_gamma[i] = pi[i] * k.g_gamma[i];
    z += k.nu_gamma[i];
    k.hitting[i] = u[idx[i]];
  }
  for (double& v : k.nu_gamma) v /= z;
  return k;
}

// P^mu(tau_Gamma > t) on a time grid, by exact evolution of the killed chain.
inline std::vector<double> survival_curve(const ReversibleChain& c, const std::vector<char>& in_gamma,
                                          const std::vector<double>& mu, const std::vector<double>& times) {
  std::vector<char> keep(c.size());
  for (int i = 0; i < c.size(); ++i) keep[i] = !in_gamma[i];
  auto [Q, e] = sub_generator(c, &keep);
  Uniformizer U(Q, e);
  std::vector<double> mu0;
  for (int i = 0; i < c.size(); ++i)
    if (keep[i]) mu0.push_back(mu[i]);
  std::vector<double> out(times.size());
  U.evolve(mu0, times, [&](int q, const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    out[q] = s;
  });
  return out;
}

struct JerrumReport {
  double lambda_bar = 0;
  double lambda_min = std::numeric_limits<double>::infinity();
  double gamma = 0;
  double bound = 0;
  double gap = 0;
  int blocks = 0;
  bool holds = false;
};

inline JerrumReport jerrum_bound(const ReversibleChain& c, const std::vector<int>& partition) {
  const int n = c.size();
  std::vector<int> remap;
  std::vector<int> block(n);
  {
    std::vector<int> ids(partition);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (int i = 0; i < n; ++i)
      block[i] = static_cast<int>(std::lower_bound(ids.begin(), ids.end(), partition[i]) - ids.begin());
    remap = ids;
  }
  JerrumReport r;
  r.blocks = static_cast<int>(remap.size());
  if (r.blocks < 2) throw std::invalid_argument("jerrum_bound: a single block has no projected gap");
  for (int b = 0; b < r.blocks; ++b) {
    std::vector<char> keep(n);
    int size = 0;
    for (int i = 0; i < n; ++i) {
      keep[i] = block[i] == b;
      size += keep[i];
    }
    if (size < 2) continue;
    if (!is_connected(c, &keep)) throw disconnected_error("jerrum_bound: disconnected block");
    auto sub = restrict_chain(c, keep);
    sub.mirror.clear();
    r.lambda_min = std::min(r.lambda_min, solve_spectrum(sub).gap);
  }
  auto proj = lump_chain(c, block, r.blocks, "projected");
  r.lambda_bar = solve_spectrum(proj).gap;
  for (int i = 0; i < n; ++i) {
    double out = 0;
    for (int k = c.rates.ptr[i]; k < c.rates.ptr[i + 1]; ++k)
      if (block[c.rates.col[k]] != block[i]) out += c.rates.val[k];
    r.gamma = std::max(r.gamma, out);
  }
  r.bound = r.lambda_bar / 3.0;
  if (std::isfinite(r.lambda_min))
    r.bound = std::min(r.bound, r.lambda_bar * r.lambda_min / (r.lambda_bar + 3.0 * r.gamma));
  r.gap = solve_spectrum(c).gap;
  r.holds = r.gap >= r.bound * (1 - 1e-12);
  return r;
}

// max |f(i) + f(mirror i)|
inline double antisymmetry_error(const ReversibleChain& c, const std::vector<double>& f) {
  double e = 0;
  for (int i = 0; i < c.size(); ++i) e = std::max(e, std::fabs(f[i] + f[c.mirror[i]]));
  return e;
}

// Largest f(eta) - f(eta') over covering pairs eta <= eta' (one site raised by 2).
inline double monotonicity_violation(const PathSpace& space, const std::vector<double>& f) {
  const int L = space.L();
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < space.size(); ++i)
    for (int p = 1; p < 2 * L; ++p) {
      const int h = space.height(i, p);
      if (space.height(i, p - 1) != h + 1 || space.height(i, p + 1) != h + 1) continue;
      const int j = space.index_of(space.flipped(space.mask(i), p));
      if (j < 0) continue;
      worst = std::max(worst, f[i] - f[j]);
    }
  return worst;
}

}  // namespace pinpoly
