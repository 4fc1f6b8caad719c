#include <catch_amalgamated.hpp>

#include <set>

#include <Eigen/Dense>

#include <pinpoly/analysis.hpp>

using namespace pinpoly;

TEST_CASE("birth-death gap against a dense solve") {
  const auto c = rho0_chain(4);
  REQUIRE(c.sites == std::vector<int>{-2, 0, 2});
  CHECK(c.rho[1] / c.rho[2] == Catch::Approx(std::pow(0.75, 1.5)));
  Eigen::Matrix3d Q = Eigen::Matrix3d::Zero();
  for (int i = 0; i < 3; ++i) {
    if (i < 2) Q(i, i + 1) = c.up[i];
    if (i > 0) Q(i, i - 1) = c.down[i];
    Q(i, i) = -(c.up[i] + c.down[i]);
  }
  Eigen::EigenSolver<Eigen::Matrix3d> es(-Q);
  std::vector<double> ev;
  for (int i = 0; i < 3; ++i) ev.push_back(es.eigenvalues()[i].real());
  std::sort(ev.begin(), ev.end());
  CHECK(ev[0] == Catch::Approx(0).margin(1e-12));
  CHECK(birth_death_gap(c) == Catch::Approx(ev[1]).epsilon(1e-10));
  CHECK(solve_spectrum(to_chain(c, "rho0")).gap == Catch::Approx(ev[1]).epsilon(1e-10));
}

TEST_CASE("single-crossing gaps and the ramp bound") {
  for (int L : {8, 16, 64, 256}) {
    const auto a = single_crossing_gap(L, RhoKind::rho0);
    const auto b = single_crossing_gap(L, RhoKind::rho, 0.5);
    CHECK(a.ramp_bound >= a.gap);
    CHECK(b.ramp_bound >= b.gap);
    CHECK(detailed_balance_error(to_chain(rho_chain(L, 0.5), "rho")) < 1e-12);
  }
  std::vector<double> x, y;
  for (int k = 6; k <= 14; ++k) {
    x.push_back(std::ldexp(1.0, k));
    y.push_back(single_crossing_gap(1 << k, RhoKind::rho0).gap);
  }
  CHECK(loglog_fit(x, y).slope == Catch::Approx(-2.5).margin(0.1));
  CHECK_THROWS(rho0_chain(2));
}

TEST_CASE("conditional law of one crossing") {
  const auto ker = make_kernel<double>(40, 0.5);
  const auto g4 = conditional_particle_law(0, 4, ker);
  CHECK(g4.offsets == std::vector<int>{2});
  CHECK(g4.prob[0] == 1.0);
  const auto g6 = conditional_particle_law(0, 6, ker);
  CHECK(g6.prob[0] == Catch::Approx(0.5));
  CHECK(g6.prob[1] == Catch::Approx(0.5));

  CHECK(ker(2) == Catch::Approx(1.0 / 4));
  CHECK(ker(4) == Catch::Approx(3.0 / 32));
  CHECK(ker(6) == Catch::Approx(13.0 / 256));
  const double w2 = 0.25, w4 = 3.0 / 32, w6 = 13.0 / 256;
  const auto g8 = conditional_particle_law(0, 8, ker);
  CHECK(g8.prob[1] == Catch::Approx(w4 * w4 / (2 * w2 * w6 + w4 * w4)));
  CHECK(g8.alpha == Catch::Approx(w2 * w6 / (2 * w2 * w6 + w4 * w4)));

  // sign patterns on 4 sites with exactly one interior crossing at an even offset
  const auto sc = projected_sigma_chain(4, 0.5);
  const auto pi = sc.chain.pi();
  double at4 = 0, total = 0;
  for (std::size_t k = 0; k < sc.states.size(); ++k) {
    const auto c = crossings_of(SignField::from_bits(4, sc.states[k]));
    if (c.n() != 1) continue;
    total += pi[k];
    if (c.xi[0] == 0) at4 += pi[k];
  }
  CHECK(at4 / total == Catch::Approx(g8.prob[1]).epsilon(1e-12));

  Stream rs(3, 0);
  int hits = 0;
  for (int i = 0; i < 20000; ++i) hits += g8.sample(rs.uniform()) == 4;
  CHECK(hits / 20000.0 == Catch::Approx(g8.prob[1]).margin(0.015));
  CHECK_THROWS(conditional_particle_law(0, 5, ker));
}

TEST_CASE("composition indexing") {
  CompositionSpace sp(3, 9);
  CHECK(sp.size() == 56);
  std::set<std::vector<int>> seen;
  for (long i = 0; i < sp.size(); ++i) {
    const auto x = sp.positions(i);
    CHECK(sp.index_of_positions(x) == i);
    CHECK(std::is_sorted(x.begin(), x.end()));
    CHECK(x.front() > -9);
    CHECK(x.back() < 9);
    seen.insert(x);
  }
  CHECK(seen.size() == 56);
  CHECK_THROWS(CompositionSpace(9, 9));
}

TEST_CASE("particle dynamics gaps") {
  const auto ker = make_kernel<double>(200, 0.5);
  for (int L : {10, 20, 40}) CHECK(particle_gap_exact(1, L, ker) == Catch::Approx(1.0).epsilon(1e-10));
  const auto c = particle_chain(CompositionSpace(2, 12), ker);
  CHECK(detailed_balance_error(c) < 1e-12);

  std::vector<double> n, g;
  for (int k = 2; k <= 5; ++k) {
    n.push_back(k);
    g.push_back(particle_gap_exact(k, 40, ker));
  }
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] < g[i - 1]);
  // log gap against n stays above a line
  const auto f = linear_fit(n, {std::log(g[0]), std::log(g[1]), std::log(g[2]), std::log(g[3])});
  CHECK(f.slope > -1.5);
}

TEST_CASE("particle dynamics simulation") {
  const auto ker = make_kernel<double>(40, 0.5);
  const double exact = particle_gap_exact(2, 20, ker);
  const auto mc = particle_gap_mc(2, 20, ker, 2e5, 1.0, 5);
  CHECK(std::fabs(mc.gap / exact - 1) < 0.2);
}

TEST_CASE("coupling experiments") {
  const auto ker = make_kernel<double>(100, 0.5);
  const auto fr = first_ring_experiment(50, ker, 20000, 1);
  CHECK(std::fabs(fr.p.estimate - fr.bound) < 3 * std::sqrt(fr.bound * (1 - fr.bound) / 20000));

  const auto e = epsilon1_experiment(3, 50, ker, 4000, 2);
  CHECK(e.p.estimate >= e.bound);

  const auto b = block_coupling_experiment(2, 2, 200, make_kernel<double>(400, 0.5), 20000, 3);
  CHECK(b.successes > 0);
}

TEST_CASE("sign-field variational quotient") {
  const auto q = sigma_variational_quotient_exact(10, 0.5);
  const double gap = solve_spectrum(projected_sigma_chain(10, 0.5).chain).gap;
  CHECK(q.quotient >= gap);
  const auto m = sigma_variational_quotient_mc(10, 0.5, 200000, 7);
  CHECK(m.quotient == Catch::Approx(q.quotient).epsilon(5 * m.stderr_quotient / q.quotient + 0.02));
  CHECK(m.middle_mass == Catch::Approx(q.middle_mass).margin(0.01));
}

TEST_CASE("bounded series rule") {
  std::vector<SigmaScalingRow> rows(4);
  for (int i = 0; i < 4; ++i) rows[i].scaled = 5.0 - 0.3 * i;
  CHECK(bounded_series(rows));
  rows[3].scaled = 11;
  CHECK_FALSE(bounded_series(rows));
}
