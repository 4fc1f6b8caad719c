#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pinpoly {

struct convergence_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Compressed sparse rows.
struct Csr {
  int n = 0;
  std::vector<int> ptr{0};
  std::vector<int> col;
  std::vector<double> val;

  void multiply(const double* x, double* y) const {
    for (int i = 0; i < n; ++i) {
      double s = 0;
      for (int k = ptr[i]; k < ptr[i + 1]; ++k) s += val[k] * x[col[k]];
      y[i] = s;
    }
  }
  std::size_t nnz() const { return col.size(); }
};

struct EigenPairs {
  std::vector<double> values;
  Eigen::MatrixXd vectors;  // columns
  std::vector<double> residuals;
  int matvecs = 0;
};

// Smallest eigenpairs of a symmetric operator by thick-restart Lanczos with
// full reorthogonalization. Columns of `deflate` (orthonormal) are projected out.
inline EigenPairs smallest_eigenpairs(const std::function<void(const double*, double*)>& op, int n,
                                      int nev, const Eigen::MatrixXd& deflate, double tol = 1e-10,
                                      int max_matvecs = 200000, int basis = 0,
                                      std::uint64_t seed = 12345) {
  if (nev < 1 || nev >= n - deflate.cols())
    throw std::invalid_argument("smallest_eigenpairs: nev out of range");
  int m = basis > 0 ? basis : std::max(2 * nev + 20, 48);
  m = std::min(m, n - static_cast<int>(deflate.cols()));
  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;

  auto orth = [&](Eigen::Ref<Eigen::VectorXd> w, int upto, Eigen::VectorXd* h) {
    for (int pass = 0; pass < 2; ++pass) {
      if (deflate.cols() > 0) w -= deflate * (deflate.transpose() * w);
      if (upto > 0) {
        Eigen::VectorXd c = V.leftCols(upto).transpose() * w;
        w -= V.leftCols(upto) * c;
        if (h) h->head(upto) += c;
      }
    }
  };
  auto fresh = [&](int upto) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = nd(gen);
    orth(v, upto, nullptr);
    v.normalize();
    return v;
  };

  V.col(0) = fresh(0);
  int k = 0;
  int matvecs = 0;
  Eigen::VectorXd w(n);
  double beta_last = 0;
  double anorm = 0;
  while (true) {
    for (int j = k; j < m; ++j) {
      op(V.col(j).data(), w.data());
      ++matvecs;
      Eigen::VectorXd h = Eigen::VectorXd::Zero(j + 1);
      orth(w, j + 1, &h);
      for (int i = 0; i <= j; ++i) {
        T(i, j) = h[i];
        T(j, i) = h[i];
      }
      double beta = w.norm();
      anorm = std::max(anorm, std::fabs(h[j]) + beta);
      if (beta < 1e-13 * std::max(anorm, 1.0)) {
        V.col(j + 1) = fresh(j + 1);
        beta = 0;
      } else {
        V.col(j + 1) = w / beta;
      }
      if (j + 1 < m) {
        T(j + 1, j) = beta;
        T(j, j + 1) = beta;
      }
      beta_last = beta;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    const Eigen::VectorXd& theta = es.eigenvalues();
    const Eigen::MatrixXd& Y = es.eigenvectors();
    for (int i = 0; i < m; ++i) anorm = std::max(anorm, std::fabs(theta[i]));
    bool done = true;
    std::vector<double> res(nev);
    for (int i = 0; i < nev; ++i) {
      res[i] = std::fabs(beta_last * Y(m - 1, i));
      if (res[i] > tol * std::max(anorm, 1e-300)) done = false;
    }
    if (done || matvecs >= max_matvecs) {
      if (!done) {
        double worst = *std::max_element(res.begin(), res.end());
        throw convergence_error("smallest_eigenpairs: not converged after " +
                                std::to_string(matvecs) + " matvecs, residual " +
                                std::to_string(worst));
      }
      EigenPairs out;
      out.vectors = V.leftCols(m) * Y.leftCols(nev);
      for (int i = 0; i < nev; ++i) {
        out.values.push_back(theta[i]);
        out.residuals.push_back(res[i]);
      }
      out.matvecs = matvecs;
      return out;
    }
    const int keep = std::min(m - 2, nev + (m - nev) / 2);
    Eigen::MatrixXd Vk = V.leftCols(m) * Y.leftCols(keep);
    V.leftCols(keep) = Vk;
    V.col(keep) = V.col(m);
    T.setZero();
    for (int i = 0; i < keep; ++i) {
      T(i, i) = theta[i];
      T(i, keep) = T(keep, i) = beta_last * Y(m - 1, i);
    }
    k = keep;
  }
}

// Preconditioned conjugate gradients for a symmetric positive definite operator.
inline std::vector<double> conjugate_gradient(const std::function<void(const double*, double*)>& op,
                                              const std::vector<double>& diag,
                                              const std::vector<double>& b, double tol = 1e-13,
                                              int max_iter = 1000000) {
  const int n = static_cast<int>(b.size());
  Eigen::Map<const Eigen::VectorXd> bb(b.data(), n);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n), r = bb, z(n), p(n), q(n);
  for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = r.dot(z);
  const double bn = bb.norm();
  for (int it = 0; it < max_iter; ++it) {
    if (r.norm() <= tol * bn) {
      return std::vector<double>(x.data(), x.data() + n);
    }
    op(p.data(), q.data());
    const double alpha = rz / p.dot(q);
    x += alpha * p;
    r -= alpha * q;
    for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    const double rz2 = r.dot(z);
    p = z + (rz2 / rz) * p;
    rz = rz2;
  }
  throw convergence_error("conjugate_gradient: no convergence");
}

// Exact evolution of a row vector under a (sub-)Markov generator by
// uniformization. `rates` holds the off-diagonal rates, `exit` the total
// loss rate of each state (including killing).
class Uniformizer {
 public:
  Uniformizer(const Csr& rates, std::vector<double> exit) : Q_(rates), exit_(std::move(exit)) {
    Lambda_ = 0;
    for (double e : exit_) Lambda_ = std::max(Lambda_, e);
    if (Lambda_ <= 0) Lambda_ = 1;
  }

  double Lambda() const { return Lambda_; }

  // times must be nondecreasing; emit(i, distribution) is called once per time.
  void evolve(const std::vector<double>& mu0, const std::vector<double>& times,
              const std::function<void(int, const std::vector<double>&)>& emit) const {
    const int n = Q_.n;
    struct Window {
      long lo, hi;
      std::vector<double> w;
    };
    std::vector<Window> win(times.size());
    long kmax = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (i > 0 && times[i] < times[i - 1]) throw std::invalid_argument("Uniformizer: unsorted times");
      const double m = Lambda_ * times[i];
      Window& W = win[i];
      if (m <= 0) {
        W.lo = W.hi = 0;
        W.w = {1.0};
      } else {
        const double s = std::sqrt(m);
        W.lo = std::max(0L, static_cast<long>(std::floor(m - 12 * s - 5)));
        W.hi = static_cast<long>(std::ceil(m + 12 * s + 30));
        W.w.resize(W.hi - W.lo + 1);
        double tot = 0;
        for (long k = W.lo; k <= W.hi; ++k) {
          const double lw = -m + k * std::log(m) - std::lgamma(k + 1.0);
          W.w[k - W.lo] = std::exp(lw);
          tot += W.w[k - W.lo];
        }
        for (double& v : W.w) v /= tot;
      }
      kmax = std::max(kmax, W.hi);
    }
    std::vector<double> v = mu0, nxt(n);
    std::map<std::size_t, std::vector<double>> acc;
    std::size_t next_open = 0;
    for (long k = 0; k <= kmax; ++k) {
      while (next_open < times.size() && win[next_open].lo <= k) {
        acc.emplace(next_open, std::vector<double>(n, 0.0));
        ++next_open;
      }
      for (auto it = acc.begin(); it != acc.end();) {
        const Window& W = win[it->first];
        if (k >= W.lo && k <= W.hi) {
          const double c = W.w[k - W.lo];
          auto& a = it->second;
          for (int j = 0; j < n; ++j) a[j] += c * v[j];
        }
        if (k == W.hi) {
          emit(static_cast<int>(it->first), it->second);
          it = acc.erase(it);
        } else {
          ++it;
        }
      }
      if (k == kmax) break;
      for (int j = 0; j < n; ++j) nxt[j] = v[j] * (1.0 - exit_[j] / Lambda_);
      for (int i = 0; i < n; ++i) {
        const double vi = v[i] / Lambda_;
        if (vi == 0) continue;
        for (int q = Q_.ptr[i]; q < Q_.ptr[i + 1]; ++q) nxt[Q_.col[q]] += vi * Q_.val[q];
      }
      v.swap(nxt);
    }
  }

 private:
  const Csr& Q_;
  std::vector<double> exit_;
  double Lambda_;
};

}  // namespace pinpoly
