#include <catch_amalgamated.hpp>

#include <pinpoly/rng.hpp>
#include <pinpoly/stats.hpp>

using namespace pinpoly;

using A4 = std::array<std::uint32_t, 4>;

// Random123 known-answer vectors for philox4x32-10.
TEST_CASE("philox known answers") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and disjoint") {
  Stream a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  int same_c = 0, same_d = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    same_c += x == c.next_u64();
    same_d += x == d.next_u64();
  }
  CHECK(same_c == 0);
  CHECK(same_d == 0);
}

TEST_CASE("uniform and exponential draws") {
  Stream s(1, 0);
  std::vector<double> u, e;
  for (int i = 0; i < 20000; ++i) {
    const double v = s.uniform();
    REQUIRE(v > 0);
    REQUIRE(v < 1);
    u.push_back(v);
    e.push_back(s.exponential(2.0));
  }
  CHECK(ks_one_sample(u, [](double x) { return x; }).p_value > 0.001);
  CHECK(ks_one_sample(e, [](double x) { return 1 - std::exp(-2 * x); }).p_value > 0.001);
  CHECK(mean(e) == Catch::Approx(0.5).margin(0.02));
}

TEST_CASE("statistics helpers") {
  const auto f = linear_fit({1, 2, 3, 4}, {3, 5, 7, 9});
  CHECK(f.slope == Catch::Approx(2));
  CHECK(f.intercept == Catch::Approx(1));
  CHECK(loglog_fit({1, 2, 4, 8}, {1, 0.25, 0.0625, 0.015625}).slope == Catch::Approx(-2));
  CHECK(kolmogorov_q(0) == Catch::Approx(1));
  CHECK(kolmogorov_q(1.36) == Catch::Approx(0.05).margin(0.002));
  const auto w = wilson_interval(50, 100);
  CHECK(w.lo < 0.5);
  CHECK(w.hi > 0.5);
  std::vector<double> a, b;
  Stream s(5, 0);
  for (int i = 0; i < 2000; ++i) {
    a.push_back(s.uniform());
    b.push_back(s.uniform() + 0.2);
  }
  CHECK(ks_two_sample(a, b).p_value < 1e-6);
}
