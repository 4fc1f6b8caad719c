#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "path.hpp"

namespace pinpoly {

using rational = boost::multiprecision::cpp_rational;

template <class S>
S half_pow(int j) {  // 2^{-j}
  S r = 1;
  for (int i = 0; i < j; ++i) r /= 2;
  return r;
}

template <>
inline double half_pow<double>(int j) {
  return std::ldexp(1.0, -j);
}

template <class S>
S power(S base, int k) {
  S r = 1;
  for (int i = 0; i < k; ++i) r *= base;
  return r;
}

// Catalan(r-1)/4^r for r >= 1: weight of a single strictly positive
// excursion of length 2r.
template <class S>
std::vector<S> excursion_weights(int max_len) {
  const int M = max_len / 2;
  std::vector<S> cs(M + 1, S(0));
  if (M >= 1) cs[1] = S(1) / 4;
  for (int r = 1; r < M; ++r) cs[r + 1] = cs[r] * S(2 * r - 1) / S(2 * (r + 1));
  return cs;
}

// Weights w[j] = 2^{-j} Z[j] for even j; odd entries are zero. w[0] = 1.
template <class S>
struct PartitionTable {
  S lambda{};
  int max_len = 0;
  std::vector<S> w_free;
  std::vector<S> w_wall;
  int cap = -1;                           // largest tracked zero count, -1 if none
  std::vector<std::vector<S>> wall_count;  // [j][k]: exactly k interior zeros

  S Z_free(int j) const { return w_free.at(j) / half_pow<S>(j); }
  S Z_wall(int j) const { return w_wall.at(j) / half_pow<S>(j); }

  // Wall weight restricted to at most m interior zeros.
  S w_wall_capped(int j, int m) const {
    if (cap < 0) throw std::logic_error("PartitionTable: no zero cap tracked");
    S s = 0;
    for (int k = 0; k <= std::min(m, cap); ++k) s += wall_count.at(j)[k] * power(lambda, k);
    return s;
  }
};

template <class S>
PartitionTable<S> partition_functions(int max_len, S lambda, std::optional<int> zero_cap = {}) {
  if (!(lambda > 0)) throw std::invalid_argument("partition_functions: lambda must be > 0");
  if (max_len < 2 || max_len % 2 != 0)
    throw std::invalid_argument("partition_functions: max_len must be even and >= 2");
  PartitionTable<S> t;
  t.lambda = lambda;
  t.max_len = max_len;
  const int M = max_len / 2;
  const auto cs = excursion_weights<S>(max_len);
  t.w_free.assign(max_len + 1, S(0));
  t.w_wall.assign(max_len + 1, S(0));
  t.w_free[0] = 1;
  t.w_wall[0] = 1;
  for (int m = 1; m <= M; ++m) {
    S wall = cs[m];
    S free = 2 * cs[m];
    for (int r = 1; r < m; ++r) {
      wall += cs[r] * lambda * t.w_wall[2 * (m - r)];
      free += 2 * cs[r] * lambda * t.w_free[2 * (m - r)];
    }
    t.w_wall[2 * m] = wall;
    t.w_free[2 * m] = free;
  }
  if (zero_cap) {
    const int K = *zero_cap;
    if (K < 0) throw std::invalid_argument("partition_functions: zero cap must be >= 0");
    t.cap = K;
    t.wall_count.assign(max_len + 1, std::vector<S>(K + 1, S(0)));
    t.wall_count[0][0] = 1;
    for (int m = 1; m <= M; ++m) {
      t.wall_count[2 * m][0] = cs[m];
      for (int k = 1; k <= K; ++k) {
        S s = 0;
        for (int r = 1; r < m; ++r) s += cs[r] * t.wall_count[2 * (m - r)][k - 1];
        t.wall_count[2 * m][k] = s;
      }
    }
  }
  return t;
}

// Unnormalized excursion kernel w[j] (even j >= 2), optionally zero-capped.
template <class S>
struct ExcursionKernel {
  S lambda{};
  std::vector<S> w;  // indexed by length; w[0] = 0 here (segments have length >= 2)
  std::optional<int> cap;

  S operator()(int j) const { return (j >= 2 && j < static_cast<int>(w.size())) ? w[j] : S(0); }
  int max_len() const { return static_cast<int>(w.size()) - 1; }
};

template <class S>
ExcursionKernel<S> make_kernel(const PartitionTable<S>& t, std::optional<int> cap = {}) {
  ExcursionKernel<S> k;
  k.lambda = t.lambda;
  k.cap = cap;
  k.w.assign(t.max_len + 1, S(0));
  for (int j = 2; j <= t.max_len; j += 2) k.w[j] = cap ? t.w_wall_capped(j, *cap) : t.w_wall[j];
  return k;
}

template <class S>
ExcursionKernel<S> make_kernel(int max_len, S lambda, std::optional<int> cap = {}) {
  return make_kernel(partition_functions<S>(max_len, lambda, cap), cap);
}

// Normalizer of the uncapped kernel, from the first-return generating
// function evaluated at 1/4 (closed form, no truncation).
inline double kernel_total_mass(double lambda, std::optional<int> cap = {}) {
  if (!cap) {
    if (lambda >= 2) throw std::domain_error("kernel_total_mass: diverges for lambda >= 2");
    return 1.0 / (2.0 - lambda);
  }
  double s = 0, lk = 1, hk = 0.5;
  for (int k = 0; k <= *cap; ++k, lk *= lambda, hk *= 0.5) s += lk * hk;
  return s;
}

// k-fold convolution powers of a kernel over even lengths up to max_len.
template <class S>
struct ConvolutionPowers {
  int K = 0;
  int max_len = 0;
  std::vector<std::vector<S>> W;  // W[k][m]

  ConvolutionPowers(const ExcursionKernel<S>& ker, int K_, int max_len_) : K(K_), max_len(max_len_) {
    if (max_len > ker.max_len()) throw std::invalid_argument("ConvolutionPowers: kernel too short");
    W.assign(K + 1, std::vector<S>(max_len + 1, S(0)));
    W[0][0] = 1;
    for (int k = 1; k <= K; ++k)
      for (int m = 2 * k; m <= max_len; m += 2) {
        S s = 0;
        for (int j = 2; j <= m - 2 * (k - 1); j += 2) s += ker(j) * W[k - 1][m - j];
        W[k][m] = s;
      }
  }
  S operator()(int k, int m) const {
    if (k < 0 || k > K || m < 0 || m > max_len) return S(0);
    return W[k][m];
  }
};

// Crossing-position law nu_n on {-L..L}: product of kernel weights over
// the n+1 gaps, conditioned on the gaps summing to 2L.
template <class S>
class CrossingLaw {
 public:
  CrossingLaw(int n, int L, const ExcursionKernel<S>& ker)
      : n_(n), L_(L), ker_(ker), conv_(ker, n + 1, 2 * L) {
    if (n < 0) throw std::invalid_argument("CrossingLaw: n must be >= 0");
    if (n > L - 1) throw std::invalid_argument("CrossingLaw: n exceeds L-1, no valid configuration");
    Z_ = conv_(n + 1, 2 * L);
  }

  int n() const { return n_; }
  int L() const { return L_; }
  S normalizer() const { return Z_; }
  const ConvolutionPowers<S>& powers() const { return conv_; }

  S weight(const CrossingConfig& c) const {
    if (c.n() != n_ || c.L != L_ || !c.valid()) return S(0);
    S w = 1;
    for (int g : c.gaps()) w *= ker_(g);
    return w;
  }
  S prob(const CrossingConfig& c) const { return weight(c) / Z_; }

  // Law of xi_i (1-based) on x = -L..L; entry index x + L.
  std::vector<S> marginal(int i) const {
    if (i < 1 || i > n_) throw std::out_of_range("CrossingLaw::marginal");
    std::vector<S> out(2 * L_ + 1, S(0));
    for (int x = -L_ + 2; x <= L_ - 2; x += 2)
      out[x + L_] = conv_(i, x + L_) * conv_(n_ + 1 - i, L_ - x) / Z_;
    return out;
  }

  // P(xi_i = x | xi_{i-1} = a), entries indexed by x + L.
  std::vector<S> conditional_next(int i, int a) const {
    std::vector<S> out(2 * L_ + 1, S(0));
    const S denom = conv_(n_ + 2 - i, L_ - a);
    for (int x = a + 2; x <= L_ - 2; x += 2) out[x + L_] = ker_(x - a) * conv_(n_ + 1 - i, L_ - x) / denom;
    return out;
  }

 private:
  int n_, L_;
  ExcursionKernel<S> ker_;
  ConvolutionPowers<S> conv_;
  S Z_{};
};

// Equilibrium probabilities obtained from the excursion decomposition.
template <class S>
struct Marginals {
  std::vector<S> zero_at;      // pi(eta_x = 0), index x + L (0 where impossible)
  std::vector<S> zeros_law;    // pi(N = k), k = 0..L-1
  std::vector<S> zeros_tail;   // pi(N > k)
  std::vector<S> crossing_law; // pi(chi = n), n = 0..L-1
  S omega_plus{};              // pi(Omega^+) = pi(Omega^-)
  S omega_o{};
  int ell = 1;
  int cap = 0;
};

template <class S>
Marginals<S> pi_marginals(int L, S lambda, int ell, int cap) {
  if (L < 1) throw std::invalid_argument("pi_marginals: L must be >= 1");
  const auto t = partition_functions<S>(2 * L, lambda, cap);
  const auto cs = excursion_weights<S>(2 * L);
  Marginals<S> m;
  m.ell = ell;
  m.cap = cap;
  const S Z = t.w_free[2 * L];
  m.zero_at.assign(2 * L + 1, S(0));
  for (int x = -L + 2; x <= L - 2; x += 2)
    m.zero_at[x + L] = lambda * t.w_free[L + x] * t.w_free[L - x] / Z;

  // free bridges by exact zero count
  std::vector<std::vector<S>> F(2 * L + 1, std::vector<S>(L + 1, S(0)));
  F[0][0] = 1;
  for (int mm = 1; mm <= L; ++mm) {
    F[2 * mm][0] = 2 * cs[mm];
    for (int k = 1; k <= L; ++k) {
      S s = 0;
      for (int r = 1; r < mm; ++r) s += 2 * cs[r] * F[2 * (mm - r)][k - 1];
      F[2 * mm][k] = s;
    }
  }
  m.zeros_law.assign(L, S(0));
  for (int k = 0; k < L; ++k) m.zeros_law[k] = power(lambda, k) * F[2 * L][k] / Z;
  m.zeros_tail.assign(L, S(0));
  S acc = 0;
  for (int k = L - 1; k >= 0; --k) {
    m.zeros_tail[k] = acc;
    acc += m.zeros_law[k];
  }

  const auto ker = make_kernel(t);
  ConvolutionPowers<S> conv(ker, L, 2 * L);
  m.crossing_law.assign(L, S(0));
  for (int n = 0; n < L; ++n) m.crossing_law[n] = 2 * power(lambda, n) * conv(n + 1, 2 * L) / Z;

  // Omega^+: last zero a <= -L+ell, first zero b >= L-ell, single excursion between
  if (ell >= L) {
    m.omega_plus = 1;
  } else {
    S plus = 0;
    for (int a = -L; a <= -L + ell; a += 2) {
      const S left = (a == -L) ? S(1) : lambda * t.w_free[a + L];
      int b0 = std::max(a + 2, L - ell);
      if ((b0 + L) % 2 != 0) ++b0;
      for (int b = b0; b <= L; b += 2) {
        const S right = (b == L) ? S(1) : lambda * t.w_free[L - b];
        plus += left * cs[(b - a) / 2] * right;
      }
    }
    m.omega_plus = plus / Z;
  }

  const auto kcap = make_kernel(t, cap);
  ConvolutionPowers<S> cconv(kcap, std::min(cap, L - 1) + 1, 2 * L);
  S o = 0;
  for (int n = 0; n <= std::min(cap, L - 1); ++n) o += 2 * power(lambda, n) * cconv(n + 1, 2 * L);
  m.omega_o = o / Z;
  return m;
}

// Brute-force equilibrium over all bridges.
template <class S>
S pi_of(int L, S lambda, const std::function<bool(const Path&)>& pred, int L_max = default_L_max) {
  S num = 0, den = 0;
  for (const auto& p : enumerate_paths(L, L_max)) {
    const S w = power(lambda, path_stats(p).zeros);
    den += w;
    if (pred(p)) num += w;
  }
  return num / den;
}

template <class S>
S enumerate_Z(int L, S lambda, const std::function<bool(const Path&)>& pred = nullptr) {
  S z = 0;
  for (const auto& p : enumerate_paths(L))
    if (!pred || pred(p)) z += power(lambda, path_stats(p).zeros);
  return z;
}

struct TailFit {
  double exponent = 0;
  double amplitude = 0;
  int points = 0;
};

template <class S>
TailFit tail_fit(const ExcursionKernel<S>& ker, int j_min, int j_max) {
  if (j_max > ker.max_len()) throw std::invalid_argument("tail_fit: j_max exceeds kernel length");
  std::vector<double> xs, ys;
  for (int j = j_min + (j_min % 2); j <= j_max; j += 2) {
    xs.push_back(std::log(static_cast<double>(j)));
    ys.push_back(std::log(static_cast<double>(ker(j))));
  }
  if (xs.size() < 10) throw std::invalid_argument("tail_fit: fit window has fewer than 10 points");
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  TailFit f;
  f.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.amplitude = std::exp((sy - f.exponent * sx) / n);
  f.points = static_cast<int>(xs.size());
  return f;
}

struct SegmentTail {
  double tail = 0;             // nu_n(zeta_1 >= 2L - L^{1/3})
  double tail_complement = 0;  // same value from 1 - P(zeta_1 < threshold)
  double scaled = 0;           // (n+1) * tail
  double doney_ratio = 0;      // rho^{*(n+1)}(2L) / ((n+1) rho(2L))
};

inline SegmentTail first_segment_tail(int n, int L, double lambda) {
  if (n < 0) throw std::invalid_argument("first_segment_tail: n must be >= 0");
  const auto ker = make_kernel<double>(2 * L, lambda);
  ConvolutionPowers<double> conv(ker, n, 2 * L);
  double Z = 0;
  for (int j = 2; j <= 2 * L; j += 2) Z += ker(j) * conv(n, 2 * L - j);
  const double thr = 2.0 * L - std::cbrt(static_cast<double>(L));
  double hi = 0, lo = 0;
  for (int j = 2; j <= 2 * L; j += 2) {
    const double term = ker(j) * conv(n, 2 * L - j);
    (j >= thr ? hi : lo) += term;
  }
  SegmentTail r;
  r.tail = hi / Z;
  r.tail_complement = 1.0 - lo / Z;
  r.scaled = (n + 1) * r.tail;
  const double zp = kernel_total_mass(lambda);
  r.doney_ratio = Z / ((n + 1) * ker(2 * L) * std::pow(zp, n));
  return r;
}

}  // namespace pinpoly
