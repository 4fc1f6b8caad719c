#include <catch_amalgamated.hpp>

#include <pinpoly/path.hpp>
#include <pinpoly/rng.hpp>

using namespace pinpoly;

TEST_CASE("enumeration sizes and order") {
  CHECK(enumerate_paths(1).size() == 2);
  CHECK(enumerate_paths(2).size() == 6);
  CHECK(enumerate_paths(3).size() == 20);
  CHECK(enumerate_paths(8).size() == 12870);
  const auto p = enumerate_paths(3);
  for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i - 1].str() < p[i].str());
  CHECK(p.front().str() == "+++---");
  CHECK(p.back().str() == "---+++");
}

TEST_CASE("capacity error names the bound") {
  REQUIRE_THROWS_AS(enumerate_paths(13), capacity_error);
  try {
    enumerate_paths(13);
  } catch (const capacity_error& e) {
    CHECK(std::string(e.what()).find("12") != std::string::npos);
  }
}

TEST_CASE("path construction") {
  CHECK_THROWS(Path(2, {1, 1, 1, -1}));
  CHECK_THROWS(Path(2, {1, 0, -1, 0}));
  CHECK_THROWS(Path::from_string("++-"));
  const auto p = Path::from_string("+-+-");
  CHECK(p.height(0) == 0);
  CHECK(p.height(-1) == 1);
  CHECK(Path::from_mask(2, p.mask()).str() == "+-+-");
  CHECK(Path::from_heights({0, 1, 0, 1, 0}).str() == "+-+-");
  CHECK(p.negated().str() == "-+-+");
  CHECK(Path::from_string("++--").reflected().str() == "++--");
}

TEST_CASE("path statistics on small cases") {
  auto a = path_stats(Path::from_string("++--"));
  CHECK(a.zeros == 0);
  CHECK(a.crossings == 0);
  CHECK(a.sigma.sign == std::vector<int>{1, 1});

  auto b = path_stats(Path::from_string("+-+-"));
  CHECK(b.zeros == 1);
  CHECK(b.crossings == 0);

  auto c = path_stats(Path::from_heights({0, 1, 0, -1, 0, 1, 0}));
  CHECK(c.zeros == 2);
  CHECK(c.crossings == 2);
  CHECK(c.xi.xi == std::vector<int>{-1, 1});
  CHECK(c.sigma.sign == std::vector<int>{1, -1, 1});
  CHECK(crossings_of(c.sigma) == c.xi);
}

TEST_CASE("zeros bound crossings, crossings have the parity of L") {
  for (int L = 1; L <= 7; ++L)
    for (const auto& p : enumerate_paths(L)) {
      const auto st = path_stats(p);
      CHECK(st.zeros >= st.crossings);
      for (int x : st.xi.xi) CHECK(((x + L) % 2 + 2) % 2 == 0);
      CHECK(st.xi.valid());
      CHECK(crossings_of(st.sigma) == st.xi);
    }
}

TEST_CASE("leq is a partial order") {
  const int L = 5;
  const auto paths = enumerate_paths(L);
  for (const auto& p : paths) {
    CHECK(leq(Path::minimal(L), p));
    CHECK(leq(p, Path::maximal(L)));
    CHECK(leq(p, p));
  }
  CHECK(leq(Path::from_heights({0, -1, 0, 1, 0}), Path::from_heights({0, 1, 2, 1, 0})));
  CHECK_FALSE(leq(Path::from_heights({0, 1, 0, -1, 0}), Path::from_heights({0, -1, 0, 1, 0})));
  CHECK_FALSE(leq(Path::from_heights({0, -1, 0, 1, 0}), Path::from_heights({0, 1, 0, -1, 0})));
  CHECK_THROWS(leq(Path::maximal(2), Path::maximal(3)));

  Stream rs(7, 0);
  auto pick = [&] { return paths[rs.next_u64() % paths.size()]; };
  for (int k = 0; k < 5000; ++k) {
    const auto a = pick(), b = pick(), c = pick();
    if (leq(a, b) && leq(b, a)) CHECK(a.str() == b.str());
    if (leq(a, b) && leq(b, c)) CHECK(leq(a, c));
  }
}

TEST_CASE("classification") {
  const int L = 3;
  const auto top = classify(Path::maximal(L), 1, 10.0);
  CHECK(top.plus);
  CHECK_FALSE(top.minus);
  CHECK_FALSE(classify(Path::from_heights({0, 1, 0, 1, 0, 1, 0}), 1, 10.0).plus);
  CHECK(classify(Path::from_heights({0, 1, 0, -1, 0, 1, 0}), 1, 2.0 / std::log(3.0) + 1e-9).o);
  CHECK_THROWS(classify(Path::maximal(L), 0, 1.0));
  CHECK_THROWS(classify(Path::maximal(L), 1, 0.0));

  for (int ell = 1; ell <= 3; ++ell)
    for (const auto& p : enumerate_paths(6)) {
      const auto c = classify(p, ell, 1.3), n = classify(p.negated(), ell, 1.3);
      CHECK(c.plus == n.minus);
      CHECK(c.minus == n.plus);
      CHECK(c.o == n.o);
    }
}

TEST_CASE("defaults") {
  CHECK(default_ell(10) == 1);
  CHECK(default_ell(1) == 1);
  CHECK(default_co(0.5) == Catch::Approx(4.0 / std::log(2.0)));
  CHECK(zero_cap(10, std::numeric_limits<double>::infinity()) == 10);
  CHECK(zero_cap(10, 1.0) == 2);
}

TEST_CASE("heat-bath probabilities") {
  CHECK(theta_down(1, 0.5) == Catch::Approx(1.0 / 3));
  CHECK(theta_down(-1, 0.5) == Catch::Approx(2.0 / 3));
  CHECK(theta_down(3, 0.5) == 0.5);
  CHECK(theta_down(1, 1.0) == 0.5);
}

TEST_CASE("floor of the plus phase") {
  const auto f = omega_plus_floor(6, 1);
  CHECK(classify(f, 1, 1.0).plus);
  for (const auto& p : enumerate_paths(6))
    if (classify(p, 1, 1.0).plus) CHECK(leq(f, p));
}
