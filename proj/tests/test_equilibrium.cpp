#include <catch_amalgamated.hpp>

#include <pinpoly/analysis.hpp>

using namespace pinpoly;

namespace {

rational R(long a, long b = 1) { return rational(a, b); }

// Brute-force weights over all bridges of length j (free) or nonnegative ones (wall).
rational brute_Z(int half, const rational& lambda, bool wall) {
  rational z = 0;
  for (const auto& p : enumerate_paths(half)) {
    bool ok = true;
    for (int q = 0; q <= 2 * half; ++q) ok = ok && (!wall || p.at(q) >= 0);
    if (ok) z += power(lambda, path_stats(p).zeros);
  }
  return z;
}

}  // namespace

TEST_CASE("partition functions match enumeration exactly") {
  for (const auto& lam : {R(1, 2), R(1), R(3, 2), R(2, 7)}) {
    const auto t = partition_functions<rational>(12, lam);
    for (int j = 2; j <= 12; j += 2) {
      CHECK(t.Z_free(j) == brute_Z(j / 2, lam, false));
      CHECK(t.Z_wall(j) == brute_Z(j / 2, lam, true));
    }
  }
}

TEST_CASE("small closed forms") {
  const rational lam = R(3, 7);
  const auto t = partition_functions<rational>(6, lam);
  CHECK(t.Z_free(2) == 2);
  CHECK(t.Z_wall(2) == 1);
  CHECK(t.Z_free(4) == 2 + 4 * lam);
  CHECK(t.Z_wall(6) == 2 + 2 * lam + lam * lam);
  CHECK(2 * partition_functions<rational>(6, R(1, 2)).Z_wall(6) == R(13, 2));
  CHECK(partition_functions<rational>(6, R(1, 4)).Z_free(6) == R(13, 2));
}

TEST_CASE("reflection identity") {
  for (const auto& lam : {R(1, 3), R(1), R(5, 2)}) {
    const auto a = partition_functions<rational>(16, lam), b = partition_functions<rational>(16, lam / 2);
    for (int j = 0; j <= 16; j += 2) CHECK(2 * a.w_wall[j] == b.w_free[j] + (j == 0 ? 1 : 0));
  }
  for (double lam : {0.1, 0.5, 0.9}) CHECK(reflection_identity_error(200, lam) < 1e-12);
}

TEST_CASE("capped wall weights by zero count") {
  const rational lam = R(1, 2);
  const auto t = partition_functions<rational>(10, lam, 10);
  for (int half = 1; half <= 5; ++half)
    for (int m = 0; m <= 4; ++m) {
      rational z = 0;
      for (const auto& p : enumerate_paths(half)) {
        bool ok = true;
        for (int q = 0; q <= 2 * half; ++q) ok = ok && p.at(q) >= 0;
        const int N = path_stats(p).zeros;
        if (ok && N <= m) z += power(lam, N);
      }
      CHECK(t.w_wall_capped(2 * half, m) == z * half_pow<rational>(2 * half));
    }
}

TEST_CASE("closed-form marginals equal enumeration") {
  for (int L = 2; L <= 6; ++L)
    for (const auto& lam : {R(1, 2), R(1), R(3, 2)}) {
      const auto r = oracle_equivalence(L, lam);
      INFO("L = " << L << " " << (r.failures.empty() ? "" : r.failures.front()));
      CHECK(r.compared > 0);
      CHECK(r.mismatches == 0);
    }
}

TEST_CASE("known equilibrium values") {
  const auto m2 = pi_marginals<rational>(2, R(1, 2), 1, 2);
  CHECK(m2.zero_at[2] == R(1, 2));
  const auto m3 = pi_marginals<rational>(3, R(1, 2), 1, 3);
  CHECK(m3.crossing_law[0] == R(13, 20));
  CHECK(m3.crossing_law[1] == R(3, 10));
  CHECK(m3.crossing_law[2] == R(1, 20));
}

TEST_CASE("uniform case reduces to counting") {
  for (int L = 2; L <= 10; ++L) {
    const auto m = pi_marginals<double>(L, 1.0, 1, L);
    for (int x = -L + 2; x <= L - 2; x += 2)
      CHECK(m.zero_at[x + L] ==
            Catch::Approx(binomial(L + x, (L + x) / 2) * binomial(L - x, (L - x) / 2) / binomial(2 * L, L)).epsilon(1e-12));
  }
}

TEST_CASE("distributions are normalized and tails decrease") {
  for (int L : {5, 20, 60})
    for (double lam : {0.3, 0.5, 0.8}) {
      const auto m = pi_marginals<double>(L, lam, 1, L);
      double s = 0, c = 0;
      for (double v : m.zeros_law) s += v;
      for (double v : m.crossing_law) c += v;
      CHECK(s == Catch::Approx(1).epsilon(1e-12));
      CHECK(c == Catch::Approx(1).epsilon(1e-12));
      for (std::size_t k = 1; k < m.zeros_tail.size(); ++k) CHECK(m.zeros_tail[k] <= m.zeros_tail[k - 1]);
      if (L == 60) CHECK(m.zeros_tail[20] < 0.01 * m.zeros_tail[2]);
    }
}

TEST_CASE("kernel tail exponent") {
  for (double lam : {0.1, 0.5, 0.9, 1.0}) {
    const auto f = kernel_tail(lam, 200, 2000);
    CHECK(f.exponent == Catch::Approx(-1.5).margin(0.05));
  }
  CHECK(kernel_tail(0.1).amplitude != Catch::Approx(kernel_tail(0.9).amplitude));
  CHECK_THROWS(tail_fit(make_kernel<double>(40, 0.5), 30, 40));
}

TEST_CASE("crossing law") {
  const auto ker = make_kernel<double>(200, 0.5);
  CrossingLaw<double> law(2, 100, ker);
  const auto m1 = law.marginal(1), m2 = law.marginal(2);
  double s1 = 0;
  for (int x = -100; x <= 100; ++x) {
    s1 += m1[x + 100];
    CHECK(m1[x + 100] == Catch::Approx(m2[100 - x]).epsilon(1e-12));
  }
  CHECK(s1 == Catch::Approx(1).epsilon(1e-12));

  // single crossing: proportional to w(L+x) w(L-x)
  CrossingLaw<double> one(1, 10, make_kernel<double>(20, 0.5));
  const auto k10 = make_kernel<double>(20, 0.5);
  const auto m = one.marginal(1);
  for (int x = -8; x <= 6; x += 2)
    CHECK(m[x + 10] / m[x + 12] == Catch::Approx(k10(10 + x) * k10(10 - x) / (k10(12 + x) * k10(8 - x))));

  // fully packed
  CrossingLaw<double> packed(4, 5, make_kernel<double>(10, 0.5));
  CHECK(packed.prob({5, {-3, -1, 1, 3}}) == Catch::Approx(1.0));
  CHECK_THROWS(CrossingLaw<double>(5, 5, make_kernel<double>(10, 0.5)));
}

TEST_CASE("first segment tail") {
  CHECK(first_segment_tail(0, 50, 0.5).tail == Catch::Approx(1.0));
  const auto t = first_segment_tail(3, 1000, 0.5);
  CHECK(t.tail == Catch::Approx(t.tail_complement).margin(1e-10));
  CHECK(t.scaled > 0);
  CHECK(t.scaled < 1);
}
