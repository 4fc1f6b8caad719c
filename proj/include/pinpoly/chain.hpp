#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "equilibrium.hpp"
#include "linalg.hpp"
#include "path.hpp"

namespace pinpoly {

struct disconnected_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Continuous-time reversible chain on states 0..n-1.
struct ReversibleChain {
  std::string label;
  std::vector<double> weight;  // unnormalized stationary weights
  Csr rates;                   // off-diagonal rates
  std::vector<int> mirror;     // optional involution (empty if none)
  int top = -1;                // state used to fix the sign of eigenfunctions

  int size() const { return static_cast<int>(weight.size()); }

  std::vector<double> pi() const {
    double z = 0;
    for (double w : weight) z += w;
    std::vector<double> p(weight.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = weight[i] / z;
    return p;
  }

  std::vector<double> exit_rates() const {
    std::vector<double> e(size(), 0.0);
    for (int i = 0; i < size(); ++i)
      for (int k = rates.ptr[i]; k < rates.ptr[i + 1]; ++k) e[i] += rates.val[k];
    return e;
  }

  double rate(int i, int j) const {
    for (int k = rates.ptr[i]; k < rates.ptr[i + 1]; ++k)
      if (rates.col[k] == j) return rates.val[k];
    return 0.0;
  }
};

class ChainBuilder {
 public:
  explicit ChainBuilder(int n) : n_(n) {}
  void add(int i, int j, double r) {
    if (i == j || r == 0) return;
    if (r < 0) throw std::invalid_argument("ChainBuilder: negative rate");
    t_.emplace_back(i, j, r);
  }
  ReversibleChain build(std::string label, std::vector<double> weight) {
    if (static_cast<int>(weight.size()) != n_) throw std::invalid_argument("ChainBuilder: weight size");
    std::sort(t_.begin(), t_.end());
    ReversibleChain c;
    c.label = std::move(label);
    c.weight = std::move(weight);
    c.rates.n = n_;
    std::vector<int> count(n_, 0);
    for (std::size_t k = 0; k < t_.size(); ++k) {
      auto [i, j, r] = t_[k];
      if (k > 0 && std::get<0>(t_[k - 1]) == i && std::get<1>(t_[k - 1]) == j) {
        c.rates.val.back() += r;
        continue;
      }
      c.rates.col.push_back(j);
      c.rates.val.push_back(r);
      ++count[i];
    }
    c.rates.ptr.assign(n_ + 1, 0);
    for (int i = 0; i < n_; ++i) c.rates.ptr[i + 1] = c.rates.ptr[i] + count[i];
    return c;
  }

 private:
  int n_;
  std::vector<std::tuple<int, int, double>> t_;
};

// Largest relative violation of pi(i)c(i,j) = pi(j)c(j,i) over stored pairs.
inline double detailed_balance_error(const ReversibleChain& c) {
  double worst = 0;
  for (int i = 0; i < c.size(); ++i)
    for (int k = c.rates.ptr[i]; k < c.rates.ptr[i + 1]; ++k) {
      const int j = c.rates.col[k];
      const double a = c.weight[i] * c.rates.val[k];
      const double b = c.weight[j] * c.rate(j, i);
      worst = std::max(worst, std::fabs(a - b) / std::max(a, b));
    }
  return worst;
}

// Largest |row sum| of the explicit generator (diagonal included), relative
// to the exit rate of the row.
inline double row_sum_error(const ReversibleChain& c) {
  double worst = 0;
  const auto e = c.exit_rates();
  for (int i = 0; i < c.size(); ++i) {
    double s = -e[i];
    for (int k = c.rates.ptr[i]; k < c.rates.ptr[i + 1]; ++k) s += c.rates.val[k];
    worst = std::max(worst, std::fabs(s) / std::max(e[i], 1e-300));
  }
  return worst;
}

inline bool is_connected(const ReversibleChain& c, const std::vector<char>* subset = nullptr) {
  const int n = c.size();
  int start = -1, count = 0;
  for (int i = 0; i < n; ++i)
    if (!subset || (*subset)[i]) {
      if (start < 0) start = i;
      ++count;
    }
  if (count == 0) return true;
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(start);
  seen[start] = 1;
  int reached = 1;
  while (!q.empty()) {
    const int i = q.front();
    q.pop();
    for (int k = c.rates.ptr[i]; k < c.rates.ptr[i + 1]; ++k) {
      const int j = c.rates.col[k];
      if (seen[j] || (subset && !(*subset)[j])) continue;
      seen[j] = 1;
      ++reached;
      q.push(j);
    }
  }
  return reached == count;
}

// Chain restricted to a subset (transitions leaving it removed).
inline ReversibleChain restrict_chain(const ReversibleChain& c, const std::vector<char>& keep,
                                      std::vector<int>* index_map = nullptr) {
  std::vector<int> idx(c.size(), -1);
  int m = 0;
  for (int i = 0; i < c.size(); ++i)
    if (keep[i]) idx[i] = m++;
  ChainBuilder b(m);
  std::vector<double> w(m);
  for (int i = 0; i < c.size(); ++i) {
    if (idx[i] < 0) continue;
    w[idx[i]] = c.weight[i];
    for (int k = c.rates.ptr[i]; k < c.rates.ptr[i + 1]; ++k)
      if (idx[c.rates.col[k]] >= 0) b.add(idx[i], idx[c.rates.col[k]], c.rates.val[k]);
  }
  auto r = b.build(c.label + "/restricted", std::move(w));
  if (!c.mirror.empty()) {
    bool closed = true;
    r.mirror.assign(m, -1);
    for (int i = 0; i < c.size(); ++i)
      if (idx[i] >= 0) {
        if (idx[c.mirror[i]] < 0) closed = false;
        else r.mirror[idx[i]] = idx[c.mirror[i]];
      }
    if (!closed) r.mirror.clear();
  }
  if (c.top >= 0 && idx[c.top] >= 0) r.top = idx[c.top];
  if (index_map) *index_map = idx;
  return r;
}

// Projected chain on blocks: cbar(I,J) = sum_{x in I} pi(x|I) sum_{y in J} c(x,y).
inline ReversibleChain lump_chain(const ReversibleChain& c, const std::vector<int>& block, int nblocks,
                                  std::string label) {
  std::vector<double> w(nblocks, 0.0);
  for (int i = 0; i < c.size(); ++i) w[block[i]] += c.weight[i];
  ChainBuilder b(nblocks);
  for (int i = 0; i < c.size(); ++i)
    for (int k = c.rates.ptr[i]; k < c.rates.ptr[i + 1]; ++k) {
      const int I = block[i], J = block[c.rates.col[k]];
      if (I != J) b.add(I, J, c.weight[i] / w[I] * c.rates.val[k]);
    }
  return b.build(std::move(label), std::move(w));
}

struct BoundaryPair {
  Path floor;
  Path ceil;
  static BoundaryPair free(int L) { return {Path::minimal(L), Path::maximal(L)}; }
};

// Indexed set of bridges, sorted by mask.
class PathSpace {
 public:
  PathSpace(int L, const std::function<bool(const Path&)>& keep = nullptr, int L_max = default_L_max)
      : L_(L) {
    for (auto m : enumerate_masks(L, L_max)) {
      if (keep) {
        const Path p = Path::from_mask(L, m);
        if (!keep(p)) continue;
      }
      masks_.push_back(m);
    }
    H_.resize(masks_.size() * (2 * L + 1));
    for (std::size_t i = 0; i < masks_.size(); ++i) {
      int h = 0;
      H_[i * (2 * L + 1)] = 0;
      for (int s = 0; s < 2 * L; ++s) {
        h += (masks_[i] >> (2 * L - 1 - s)) & 1u ? -1 : 1;
        H_[i * (2 * L + 1) + s + 1] = static_cast<std::int8_t>(h);
      }
    }
    if (2 * L <= 22) {
      table_.assign(std::size_t{1} << (2 * L), -1);
      for (std::size_t i = 0; i < masks_.size(); ++i) table_[masks_[i]] = static_cast<int>(i);
    }
  }

  int L() const { return L_; }
  int size() const { return static_cast<int>(masks_.size()); }
  std::uint64_t mask(int i) const { return masks_[i]; }
  int height(int i, int p) const { return H_[static_cast<std::size_t>(i) * (2 * L_ + 1) + p]; }
  Path path(int i) const { return Path::from_mask(L_, masks_[i]); }
  std::uint64_t full_mask() const { return (std::uint64_t{1} << (2 * L_)) - 1; }

  int index_of(std::uint64_t m) const {
    if (!table_.empty()) return m < table_.size() ? table_[m] : -1;
    auto it = std::lower_bound(masks_.begin(), masks_.end(), m);
    return (it != masks_.end() && *it == m) ? static_cast<int>(it - masks_.begin()) : -1;
  }
  int index_of(const Path& p) const { return index_of(p.mask()); }

  // Mask after moving site p (1..2L-1): swaps steps p-1 and p.
  std::uint64_t flipped(std::uint64_t m, int p) const {
    return m ^ (std::uint64_t{1} << (2 * L_ - p)) ^ (std::uint64_t{1} << (2 * L_ - 1 - p));
  }

 private:
  int L_;
  std::vector<std::uint64_t> masks_;
  std::vector<std::int8_t> H_;
  std::vector<int> table_;
};

struct PolymerChain {
  PathSpace space;
  ReversibleChain chain;
};

inline PolymerChain build_generator(int L, double lambda, const BoundaryPair& bounds,
                                    std::optional<double> restrict_o = {}, int L_max = default_L_max) {
  if (!(lambda > 0)) throw std::invalid_argument("build_generator: lambda must be > 0");
  if (!leq(bounds.floor, bounds.ceil)) throw std::invalid_argument("build_generator: floor above ceiling");
  const bool free_bounds = bounds.floor == Path::minimal(L) && bounds.ceil == Path::maximal(L);
  const int cap = restrict_o ? zero_cap(L, *restrict_o) : 0;
  std::function<bool(const Path&)> keep;
  if (!free_bounds || restrict_o)
    keep = [&](const Path& p) {
      if (!leq(bounds.floor, p) || !leq(p, bounds.ceil)) return false;
      return !restrict_o || in_omega_o(path_stats(p), cap);
    };
  PathSpace space(L, keep, L_max);
  const int n = space.size();
  if (n == 0) throw std::invalid_argument("build_generator: empty state space");
  ChainBuilder b(n);
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    int zeros = 0;
    for (int p = 1; p < 2 * L; ++p) {
      if (space.height(i, p) == 0) ++zeros;
      const int hl = space.height(i, p - 1), hr = space.height(i, p + 1);
      if (hl != hr) continue;
      const int target = 2 * hl - space.height(i, p);
      const int j = space.index_of(space.flipped(space.mask(i), p));
      if (j < 0) continue;
      b.add(i, j, move_rate(hl, target, lambda));
    }
    w[i] = std::pow(lambda, zeros);
  }
  std::string label = restrict_o ? "polymer/omega-o" : (free_bounds ? "polymer" : "polymer/bounded");
  auto c = b.build(label, std::move(w));
  c.mirror.assign(n, -1);
  bool closed = true;
  for (int i = 0; i < n; ++i) {
    c.mirror[i] = space.index_of(space.mask(i) ^ space.full_mask());
    if (c.mirror[i] < 0) closed = false;
  }
  if (!closed) c.mirror.clear();
  c.top = space.index_of(bounds.ceil);
  if (c.top < 0) c.top = n - 1;
  if (!is_connected(c)) throw disconnected_error("build_generator: restricted state space is disconnected");
  return {std::move(space), std::move(c)};
}

// Sign-field model: weights nu(sigma) and flip rates from excursion sums.
template <class S>
class SigmaModel {
 public:
  SigmaModel(int L, S lambda, std::optional<int> cap = {})
      : L_(L), lambda_(lambda), cap_(cap), table_(partition_functions<S>(2 * L, lambda, cap)) {}

  int L() const { return L_; }
  std::optional<int> cap() const { return cap_; }
  const PartitionTable<S>& table() const { return table_; }

  // Wall weight of a segment of length len with at most cap - offset zeros.
  S seg(int len, int offset = 0) const {
    if (!cap_) return table_.w_wall[len];
    const int budget = *cap_ - offset;
    if (budget < 0) return S(0);
    return table_.w_wall_capped(len, budget);
  }

  // Two adjacent pieces sharing a zero budget of cap - offset.
  S pair(int len1, int len2, int offset) const {
    if (!cap_) return table_.w_wall[len1] * table_.w_wall[len2];
    const int budget = *cap_ - offset;
    S s = 0;
    for (int k1 = 0; k1 <= budget; ++k1)
      for (int k2 = 0; k1 + k2 <= budget; ++k2)
        s += table_.wall_count[len1][k1] * table_.wall_count[len2][k2] * power(lambda_, k1 + k2);
    return s;
  }

  bool allowed(const SignField& s) const { return !cap_ || crossings_of(s).n() <= *cap_; }

  S weight(const SignField& s) const {
    const auto c = crossings_of(s);
    if (cap_ && c.n() > *cap_) return S(0);
    S w = power(lambda_, c.n());
    for (int g : c.gaps()) w *= seg(g);
    return w;
  }

  // Rate of flipping sigma at O_L index i.
  double theta(const SignField& s, int i) const {
    const auto c = crossings_of(s);
    const int n = c.n();
    const int x = s.site(i), a = x - 1, b = x + 1;
    const auto is_cross = [&](int y) { return std::binary_search(c.xi.begin(), c.xi.end(), y); };
    const bool aF = a == -L_ || is_cross(a);
    const bool bF = b == L_ || is_cross(b);
    int sidx = 0;  // segment [pos(sidx), pos(sidx+1)] containing (a, b)
    while (c.pos(sidx + 1) < b) ++sidx;
    const int lo = c.pos(sidx), hi = c.pos(sidx + 1);
    const S w2 = S(1) / 4;
    const bool capped = cap_.has_value();
    const int C = capped ? *cap_ : 0;
    auto D = [](const S& v) { return static_cast<double>(v); };
    if (!aF && !bF) {
      if (capped && n + 2 > C) return 0.0;
      return 0.5 * D(lambda_ * lambda_ * w2 * pair(a - lo, hi - b, 2) / seg(hi - lo));
    }
    if (aF && !bF) {
      const S here = w2 * lambda_ * seg(hi - b, 1) / seg(hi - lo);
      if (a == -L_) {
        if (capped && n + 1 > C) return 0.0;
        return 0.5 * D(here);
      }
      const int left = a - c.pos(sidx - 1);
      return 0.5 * D(here * seg(left, 1) / seg(left));
    }
    if (!aF && bF) {
      const S here = w2 * lambda_ * seg(a - lo, 1) / seg(hi - lo);
      if (b == L_) {
        if (capped && n + 1 > C) return 0.0;
        return 0.5 * D(here);
      }
      const int right = c.pos(sidx + 2) - b;
      return 0.5 * D(here * seg(right, 1) / seg(right));
    }
    if (a == -L_ && b == L_) return 0.5;
    if (a == -L_) {
      const int right = c.pos(sidx + 2) - b;
      return 0.5 * D(seg(right, 1) / seg(right));
    }
    if (b == L_) {
      const int left = a - c.pos(sidx - 1);
      return 0.5 * D(seg(left, 1) / seg(left));
    }
    const int left = a - c.pos(sidx - 1), right = c.pos(sidx + 2) - b;
    return 0.5 * D(pair(left, right, 2) / (seg(left) * seg(right)));
  }

 private:
  int L_;
  S lambda_;
  std::optional<int> cap_;
  PartitionTable<S> table_;
};

struct SigmaChain {
  std::vector<std::uint32_t> states;  // sign bits (bit i set iff sigma at O_L index i is +)
  ReversibleChain chain;
  int index_of(std::uint32_t bits) const {
    auto it = std::lower_bound(states.begin(), states.end(), bits);
    return (it != states.end() && *it == bits) ? static_cast<int>(it - states.begin()) : -1;
  }
};

inline SigmaChain projected_sigma_chain(int L, double lambda, std::optional<double> co = {},
                                        int L_max = 14) {
  if (L < 1) throw std::invalid_argument("projected_sigma_chain: L must be >= 1");
  if (L > L_max)
    throw capacity_error("projected_sigma_chain: L = " + std::to_string(L) + " exceeds L_max = " +
                         std::to_string(L_max));
  std::optional<int> cap;
  if (co) cap = zero_cap(L, *co);
  SigmaModel<double> model(L, lambda, cap);
  SigmaChain sc;
  for (std::uint32_t bits = 0; bits < (1u << L); ++bits)
    if (model.allowed(SignField::from_bits(L, bits))) sc.states.push_back(bits);
  const int n = static_cast<int>(sc.states.size());
  ChainBuilder b(n);
  std::vector<double> w(n);
  for (int k = 0; k < n; ++k) {
    const auto s = SignField::from_bits(L, sc.states[k]);
    w[k] = model.weight(s);
    for (int i = 0; i < L; ++i) {
      const int j = sc.index_of(sc.states[k] ^ (1u << i));
      if (j < 0) continue;
      b.add(k, j, model.theta(s, i));
    }
  }
  sc.chain = b.build(cap ? "sigma/omega-o" : "sigma", std::move(w));
  sc.chain.mirror.resize(n);
  for (int k = 0; k < n; ++k) sc.chain.mirror[k] = sc.index_of(sc.states[k] ^ ((1u << L) - 1));
  sc.chain.top = sc.index_of((1u << L) - 1);
  return sc;
}

// Sign-class of every polymer state, as an index into the 2^L sign fields.
inline std::vector<int> sigma_blocks(const PathSpace& space) {
  std::vector<int> block(space.size());
  const int L = space.L();
  for (int i = 0; i < space.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < L; ++k)
      if (space.height(i, 2 * k + 1) > 0) bits |= 1u << k;
    block[i] = static_cast<int>(bits);
  }
  return block;
}

struct CrossingCountChain {
  ReversibleChain chain;   // states n = 0..m
  std::vector<double> mu;  // stationary law
};

inline CrossingCountChain crossing_count_chain(int L, double lambda, int m, std::optional<double> co = {}) {
  if (m < 0) throw std::invalid_argument("crossing_count_chain: m must be >= 0");
  const auto sc = projected_sigma_chain(L, lambda, co);
  std::vector<char> keep(sc.states.size());
  std::vector<int> count(sc.states.size());
  for (std::size_t k = 0; k < sc.states.size(); ++k) {
    const auto s = SignField::from_bits(L, sc.states[k]);
    count[k] = crossings_of(s).n();
    keep[k] = (sc.states[k] & 1u) && count[k] <= m;
  }
  std::vector<int> idx;
  const auto sub = restrict_chain(sc.chain, keep, &idx);
  std::vector<int> block(sub.size());
  for (std::size_t k = 0; k < sc.states.size(); ++k)
    if (idx[k] >= 0) block[idx[k]] = count[k];
  const int top = std::min(m, L - 1);
  CrossingCountChain out;
  out.chain = lump_chain(sub, block, top + 1, "crossing-count");
  out.mu = out.chain.pi();
  return out;
}

}  // namespace pinpoly
