#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace pinpoly {

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  int points = 0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0) throw std::invalid_argument("linear_fit: degenerate abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  f.points = static_cast<int>(x.size());
  return f;
}

inline LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return linear_fit(lx, ly);
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Kolmogorov limiting survival function Q(x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_q(double x) {
  if (x <= 0) return 1.0;
  if (x < 0.3) {
    // small-argument form via the theta-function identity
    const double c = std::sqrt(2 * M_PI) / x;
    double s = 0;
    for (int k = 1; k <= 50; ++k) s += std::exp(-(2 * k - 1) * (2 * k - 1) * M_PI * M_PI / (8 * x * x));
    return std::clamp(1.0 - c * s, 0.0, 1.0);
  }
  double s = 0;
  for (int k = 1; k <= 200; ++k) {
    const double t = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 1 : -1) * t;
    if (t < 1e-18) break;
  }
  return std::clamp(2 * s, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0;
  double p_value = 0;
};

inline KsResult ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf) {
  if (xs.empty()) throw std::invalid_argument("ks_one_sample: empty sample");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::fabs(i / na - j / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

struct Interval {
  double estimate = 0;
  double lo = 0;
  double hi = 0;
};

inline Interval wilson_interval(long successes, long trials, double z = 1.96) {
  if (trials <= 0) return {0, 0, 1};
  const double n = static_cast<double>(trials), p = successes / n;
  const double den = 1 + z * z / n;
  const double c = (p + z * z / (2 * n)) / den;
  const double h = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den;
  return {p, std::max(0.0, c - h), std::min(1.0, c + h)};
}

}  // namespace pinpoly
