#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pinpoly {

struct capacity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int default_L_max = 12;

// Lattice bridge of length 2L pinned at both ends. Heights are stored at
// p = x + L, p = 0..2L.
class Path {
 public:
  Path() = default;

  Path(int L, const std::vector<int>& steps) : L_(L), h_(2 * L + 1, 0) {
    if (L < 1) throw std::invalid_argument("Path: L must be >= 1");
    if (static_cast<int>(steps.size()) != 2 * L)
      throw std::invalid_argument("Path: expected 2L steps");
    for (int i = 0; i < 2 * L; ++i) {
      if (steps[i] != 1 && steps[i] != -1)
        throw std::invalid_argument("Path: steps must be +1 or -1");
      h_[i + 1] = h_[i] + steps[i];
    }
    if (h_.back() != 0) throw std::invalid_argument("Path: steps must sum to zero");
  }

  static Path from_heights(const std::vector<int>& h) {
    if (h.size() < 3 || h.size() % 2 == 0)
      throw std::invalid_argument("Path: heights must have odd length >= 3");
    const int L = static_cast<int>(h.size() - 1) / 2;
    std::vector<int> steps(2 * L);
    if (h.front() != 0) throw std::invalid_argument("Path: heights must start at 0");
    for (int i = 0; i < 2 * L; ++i) steps[i] = h[i + 1] - h[i];
    return Path(L, steps);
  }

  static Path from_string(const std::string& s) {
    if (s.size() < 2 || s.size() % 2 != 0)
      throw std::invalid_argument("Path: sign string must have even length");
    std::vector<int> steps;
    for (char c : s) {
      if (c == '+') steps.push_back(1);
      else if (c == '-') steps.push_back(-1);
      else throw std::invalid_argument("Path: sign string uses only '+' and '-'");
    }
    return Path(static_cast<int>(s.size() / 2), steps);
  }

  // Bit i (counted from the most significant of 2L bits) is set iff step i is -1.
  static Path from_mask(int L, std::uint64_t mask) {
    std::vector<int> steps(2 * L);
    for (int i = 0; i < 2 * L; ++i) steps[i] = (mask >> (2 * L - 1 - i)) & 1u ? -1 : 1;
    return Path(L, steps);
  }

  static Path maximal(int L) {
    std::vector<int> steps(2 * L);
    for (int i = 0; i < 2 * L; ++i) steps[i] = i < L ? 1 : -1;
    return Path(L, steps);
  }

  static Path minimal(int L) {
    std::vector<int> steps(2 * L);
    for (int i = 0; i < 2 * L; ++i) steps[i] = i < L ? -1 : 1;
    return Path(L, steps);
  }

  int L() const { return L_; }
  int height(int x) const { return h_.at(x + L_); }
  int at(int p) const { return h_[p]; }
  const std::vector<int>& heights() const { return h_; }

  std::vector<int> steps() const {
    std::vector<int> s(2 * L_);
    for (int i = 0; i < 2 * L_; ++i) s[i] = h_[i + 1] - h_[i];
    return s;
  }

  std::uint64_t mask() const {
    std::uint64_t m = 0;
    for (int i = 0; i < 2 * L_; ++i)
      if (h_[i + 1] < h_[i]) m |= std::uint64_t{1} << (2 * L_ - 1 - i);
    return m;
  }

  std::string str() const {
    std::string s(2 * L_, '+');
    for (int i = 0; i < 2 * L_; ++i)
      if (h_[i + 1] < h_[i]) s[i] = '-';
    return s;
  }

  Path negated() const {
    Path q = *this;
    for (auto& v : q.h_) v = -v;
    return q;
  }

  Path reflected() const {
    Path q = *this;
    std::reverse(q.h_.begin(), q.h_.end());
    return q;
  }

  bool operator==(const Path& o) const { return L_ == o.L_ && h_ == o.h_; }

 private:
  int L_ = 0;
  std::vector<int> h_;
};

inline int sgn(int v) { return (v > 0) - (v < 0); }

// Sign field on O_L = {-L+1, -L+3, ..., L-1}; entry i sits at x = -L+1+2i.
struct SignField {
  int L = 0;
  std::vector<int> sign;

  static SignField from_bits(int L, std::uint32_t plus_bits) {
    SignField s{L, std::vector<int>(L)};
    for (int i = 0; i < L; ++i) s.sign[i] = (plus_bits >> i) & 1u ? 1 : -1;
    return s;
  }
  std::uint32_t bits() const {
    std::uint32_t b = 0;
    for (int i = 0; i < L; ++i)
      if (sign[i] > 0) b |= 1u << i;
    return b;
  }
  int site(int i) const { return -L + 1 + 2 * i; }
  bool operator==(const SignField& o) const { return L == o.L && sign == o.sign; }
};

struct CrossingConfig {
  int L = 0;
  std::vector<int> xi;  // interior crossing positions, increasing

  int n() const { return static_cast<int>(xi.size()); }
  int pos(int i) const {  // with sentinels xi_0 = -L, xi_{n+1} = L
    if (i == 0) return -L;
    if (i == n() + 1) return L;
    return xi[i - 1];
  }
  std::vector<int> gaps() const {
    std::vector<int> g;
    for (int i = 0; i <= n(); ++i) g.push_back(pos(i + 1) - pos(i));
    return g;
  }
  bool valid() const {
    for (int i = 0; i <= n(); ++i) {
      const int d = pos(i + 1) - pos(i);
      if (d < 2 || d % 2 != 0) return false;
    }
    return true;
  }
  bool operator==(const CrossingConfig& o) const { return L == o.L && xi == o.xi; }
};

inline CrossingConfig crossings_of(const SignField& s) {
  CrossingConfig c{s.L, {}};
  for (int i = 0; i + 1 < s.L; ++i)
    if (s.sign[i] != s.sign[i + 1]) c.xi.push_back(s.site(i) + 1);
  return c;
}

struct PathStats {
  int zeros = 0;
  int crossings = 0;
  CrossingConfig xi;
  SignField sigma;
  std::vector<int> segment_zeros;  // zeros strictly inside each of the chi+1 segments
};

inline PathStats path_stats(const Path& eta) {
  const int L = eta.L();
  PathStats st;
  st.xi.L = L;
  st.sigma = SignField{L, std::vector<int>(L)};
  for (int i = 0; i < L; ++i) st.sigma.sign[i] = sgn(eta.at(2 * i + 1));
  for (int p = 1; p < 2 * L; ++p)
    if (eta.at(p) == 0) ++st.zeros;
  int run = 0;
  for (int p = 1; p < 2 * L; ++p) {
    if (eta.at(p) != 0) continue;
    const bool crossing = p >= 2 && p <= 2 * L - 2 && eta.at(p - 1) != eta.at(p + 1);
    if (crossing) {
      st.xi.xi.push_back(p - L);
      st.segment_zeros.push_back(run);
      run = 0;
    } else {
      ++run;
    }
  }
  st.segment_zeros.push_back(run);
  st.crossings = st.xi.n();
  return st;
}

inline bool leq(const Path& a, const Path& b) {
  if (a.L() != b.L()) throw std::invalid_argument("leq: length mismatch");
  for (int p = 0; p <= 2 * a.L(); ++p)
    if (a.at(p) > b.at(p)) return false;
  return true;
}

inline int default_ell(int L) {
  const double v = std::pow(std::log(static_cast<double>(std::max(L, 1))), 0.25);
  return std::max(1, static_cast<int>(std::lround(v)));
}

inline double default_co(double lambda) { return 4.0 / std::fabs(std::log(lambda)); }

// Clamped to L: a bridge of half-length L has fewer than L zeros.
inline int zero_cap(int L, double co) {
  const double v = std::floor(co * std::log(static_cast<double>(L)) + 1e-12);
  if (!(v < L)) return L;
  return static_cast<int>(v);
}

struct Classification {
  bool plus = false;
  bool minus = false;
  bool o = false;
};

inline bool in_window_sign(const Path& eta, int ell, int s) {
  const int L = eta.L();
  for (int x = -L + ell + 1; x <= L - ell - 1; ++x)
    if (s * eta.height(x) <= 0) return false;
  return true;
}

inline bool in_omega_o(const PathStats& st, int cap) {
  if (st.crossings > cap) return false;
  return std::all_of(st.segment_zeros.begin(), st.segment_zeros.end(),
                     [cap](int z) { return z <= cap; });
}

inline Classification classify(const Path& eta, int ell, double co) {
  if (ell < 1) throw std::invalid_argument("classify: ell must be >= 1");
  if (!(co > 0)) throw std::invalid_argument("classify: c_o must be > 0");
  Classification c;
  c.plus = in_window_sign(eta, ell, 1);
  c.minus = in_window_sign(eta, ell, -1);
  c.o = in_omega_o(path_stats(eta), zero_cap(eta.L(), co));
  return c;
}

// Heat-bath probability of landing at h-1 when both neighbours sit at h.
inline double theta_down(int h, double lambda) {
  if (h == 1) return lambda / (lambda + 1.0);
  if (h == -1) return 1.0 / (lambda + 1.0);
  return 0.5;
}

// Rate of the move that sets the site to `target` when both neighbours sit at h.
inline double move_rate(int h, int target, double lambda) {
  const double d = theta_down(h, lambda);
  return target == h - 1 ? d : 1.0 - d;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

// Bridges of length 2L in increasing mask order, i.e. lexicographic on
// steps with '+' before '-'.
inline std::vector<std::uint64_t> enumerate_masks(int L, int L_max = default_L_max) {
  if (L < 1) throw std::invalid_argument("enumerate_paths: L must be >= 1");
  if (L > L_max)
    throw capacity_error("enumerate_paths: L = " + std::to_string(L) +
                         " exceeds L_max = " + std::to_string(L_max));
  std::vector<std::uint64_t> out;
  out.reserve(static_cast<std::size_t>(binomial(2 * L, L)));
  std::uint64_t v = (std::uint64_t{1} << L) - 1;
  const std::uint64_t end = std::uint64_t{1} << (2 * L);
  while (v < end) {
    out.push_back(v);
    const std::uint64_t t = v | (v - 1);
    v = (t + 1) | (((~t & -~t) - 1) >> (__builtin_ctzll(v) + 1));
  }
  return out;
}

inline std::vector<Path> enumerate_paths(int L, int L_max = default_L_max) {
  std::vector<Path> out;
  for (auto m : enumerate_masks(L, L_max)) out.push_back(Path::from_mask(L, m));
  return out;
}

// Minimal bridge lying above a pointwise lower constraint (entries may be
// numeric_limits<int>::min() for "free").
inline Path minimal_above(int L, const std::vector<int>& lower) {
  std::vector<int> h(2 * L + 1);
  for (int p = 0; p <= 2 * L; ++p) {
    int v = -std::min(p, 2 * L - p);
    for (int q = 0; q <= 2 * L; ++q)
      if (lower[q] != std::numeric_limits<int>::min()) v = std::max(v, lower[q] - std::abs(p - q));
    h[p] = v;
  }
  for (int p = 0; p <= 2 * L; ++p)
    if (std::abs(h[p]) % 2 != p % 2 || h[p] > std::min(p, 2 * L - p))
      throw std::invalid_argument("minimal_above: infeasible constraint");
  return Path::from_heights(h);
}

// Minimal element of Omega^+ for window parameter ell.
inline Path omega_plus_floor(int L, int ell) {
  std::vector<int> lower(2 * L + 1, std::numeric_limits<int>::min());
  for (int x = -L + ell + 1; x <= L - ell - 1; ++x) lower[x + L] = ((x + L) % 2 == 0) ? 2 : 1;
  return minimal_above(L, lower);
}

}  // namespace pinpoly
