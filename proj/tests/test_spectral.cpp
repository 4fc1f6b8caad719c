#include <catch_amalgamated.hpp>

#include <pinpoly/analysis.hpp>

using namespace pinpoly;

namespace {

ReversibleChain two_state(double a, double b) {
  ChainBuilder cb(2);
  cb.add(0, 1, a);
  cb.add(1, 0, b);
  return cb.build("two-state", {b, a});
}

}  // namespace

TEST_CASE("two-state chain") {
  const auto c = two_state(0.3, 1.7);
  for (Mode m : {Mode::dense, Mode::sparse}) CHECK(solve_spectrum(c, m).gap == Catch::Approx(2.0));
  // absorbing state 1, exit rate a from 0
  const auto k = qsd_analysis(c, {0, 1});
  CHECK(k.gamma == Catch::Approx(0.3));
  CHECK(k.hitting[0] == Catch::Approx(1 / 0.3));
  CHECK_THROWS(qsd_analysis(c, {1, 1}));
  CHECK_THROWS(qsd_analysis(c, {0, 0}));
}

TEST_CASE("dense and sparse solvers agree") {
  for (int L : {4, 6, 7}) {
    const auto pc = build_generator(L, 0.5, BoundaryPair::free(L));
    const auto d = solve_spectrum(pc.chain, Mode::dense), s = solve_spectrum(pc.chain, Mode::sparse);
    CHECK(d.gap == Catch::Approx(s.gap).epsilon(1e-8));
    CHECK(d.residual < 1e-8);
    CHECK(s.residual < 1e-8);
    CHECK(d.g[pc.chain.top] > 0);
    CHECK(s.g[pc.chain.top] > 0);
  }
}

TEST_CASE("principal eigenfunction is antisymmetric and increasing") {
  for (int L = 3; L <= 8; ++L) {
    const auto pc = build_generator(L, 0.5, BoundaryPair::free(L));
    const auto s = solve_spectrum(pc.chain);
    CHECK(antisymmetry_error(pc.chain, s.g) < 1e-10);
    CHECK(monotonicity_violation(pc.space, s.g) <= 1e-10);
    double norm = 0, mean = 0;
    for (int i = 0; i < pc.chain.size(); ++i) {
      norm += s.pi[i] * s.g[i] * s.g[i];
      mean += s.pi[i] * s.g[i];
    }
    CHECK(norm == Catch::Approx(1).epsilon(1e-10));
    CHECK(std::fabs(mean) < 1e-10);
  }
}

TEST_CASE("exact time evolution") {
  const auto pc = build_generator(6, 0.5, BoundaryPair::free(6));
  const auto s = solve_spectrum(pc.chain, Mode::dense);
  Semigroup sg(pc.chain, &s);
  const auto mu = point_mass(pc.chain.size(), pc.chain.top);
  CHECK(tv_curve(sg, mu, {0.0})[0] == Catch::Approx(1 - s.pi[pc.chain.top]));

  // spectral and uniformized evolutions coincide
  Semigroup uni(pc.chain);
  const std::vector<double> ts{1.0, 10.0, 100.0};
  const auto a = sg.at(mu, ts), b = uni.at(mu, ts);
  for (std::size_t q = 0; q < ts.size(); ++q)
    for (int i = 0; i < pc.chain.size(); ++i) CHECK(a[q][i] == Catch::Approx(b[q][i]).margin(1e-10));

  const auto m = tv_and_mixing(pc.chain, s, {pc.chain.top, 0}, 1 / (2 * std::exp(1.0)), {});
  CHECK(m.sandwich);
  CHECK(m.t_mix >= m.t_rel);
  CHECK_THROWS(mixing_time(sg, mu, 1e-3, 1.0));
}

TEST_CASE("killed chain and quasi-stationary law") {
  const auto q = qsd_report(6, 0.5, 50);
  CHECK(q.survival_error < 1e-8);
  CHECK(q.gamma_bracket);
}

TEST_CASE("block decomposition bound") {
  // singletons: the projected chain is the chain itself
  const auto pc = build_generator(4, 0.5, BoundaryPair::free(4));
  std::vector<int> single(pc.chain.size());
  for (int i = 0; i < pc.chain.size(); ++i) single[i] = i;
  const auto j1 = jerrum_bound(pc.chain, single);
  CHECK(j1.lambda_bar == Catch::Approx(j1.gap));
  CHECK(std::isinf(j1.lambda_min));
  CHECK(j1.bound == Catch::Approx(j1.gap / 3));
  CHECK(j1.holds);

  for (int L : {3, 4, 5}) {
    const auto p = build_generator(L, 0.5, BoundaryPair::free(L));
    const auto j = jerrum_bound(p.chain, sigma_blocks(p.space));
    CHECK(j.holds);
    CHECK(j.bound > 0);
  }
  CHECK_THROWS(jerrum_bound(pc.chain, std::vector<int>(pc.chain.size(), 0)));
}

TEST_CASE("suite invariants on a small case") {
  const auto r = spectral_suite(5, 0.5);
  CHECK(r.db_error < 1e-12);
  CHECK(r.row_error < 1e-12);
  CHECK(r.sandwich);
  CHECK(r.submult_excess <= 1e-12);
  CHECK(r.pair_bound_excess <= 1e-12);
  CHECK(r.hard_ok());
}
