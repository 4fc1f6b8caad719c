#include <catch_amalgamated.hpp>

#include <pinpoly/analysis.hpp>

#include <map>
#include <sstream>

using namespace pinpoly;

namespace {

double height0(const State& s) { return s.h[s.L]; }

}  // namespace

TEST_CASE("same seed gives the same trajectory") {
  const auto spec = DynamicsSpec::free(8, 0.5);
  SimOptions o;
  o.record_events = true;
  const auto a = simulate_heatbath(spec, Path::maximal(8), 200, 9, o);
  const auto b = simulate_heatbath(spec, Path::maximal(8), 200, 9, o);
  const auto c = simulate_heatbath(spec, Path::maximal(8), 200, 10, o);
  CHECK(a.event_times == b.event_times);
  CHECK(a.event_sites == b.event_sites);
  CHECK(a.final_state == b.final_state);
  CHECK(a.event_times != c.event_times);
}

TEST_CASE("a schedule allowing every site changes nothing") {
  const auto spec = DynamicsSpec::free(6, 0.5);
  SimOptions o;
  o.record_events = true;
  const auto free_run = simulate_heatbath(spec, Path::maximal(6), 100, 3, o);
  const auto sched = schedule_all(6, 100);
  o.schedule = &sched;
  const auto cens = simulate_heatbath(spec, Path::maximal(6), 100, 3, o);
  CHECK(free_run.event_times == cens.event_times);
  CHECK(free_run.event_sites == cens.event_sites);
}

TEST_CASE("a censored site never flips") {
  const int L = 6;
  auto allowed = std::vector<char>(2 * L + 1, 1);
  allowed[L + 2] = 0;
  const Schedule s{{{0.0, 500.0, allowed}}};
  SimOptions o;
  o.schedule = &s;
  const auto r = simulate_heatbath(DynamicsSpec::free(L, 0.5), Path::maximal(L), 500, 4, o);
  CHECK(r.site_flips[L + 2] == 0);
  CHECK(r.moves > 0);
}

TEST_CASE("time-t law matches the exact semigroup") {
  const int L = 4;
  const double lam = 0.5;
  const auto pc = build_generator(L, lam, BoundaryPair::free(L));
  const auto s = solve_spectrum(pc.chain, Mode::dense);
  Semigroup sg(pc.chain, &s);
  const double t = s.t_rel;
  const auto exact = sg.at(point_mass(pc.chain.size(), pc.chain.top), {t})[0];
  const int runs = 100000;
  std::vector<double> hist(pc.chain.size(), 0.0);
  const auto spec = DynamicsSpec::free(L, lam);
  for (int k = 0; k < runs; ++k) {
    const auto r = simulate_heatbath(spec, Path::maximal(L), t, 17, {}, k);
    hist[pc.space.index_of(r.final_state)] += 1.0 / runs;
  }
  double tv = 0;
  for (int i = 0; i < pc.chain.size(); ++i) tv += 0.5 * std::fabs(hist[i] - exact[i]);
  CHECK(tv < 0.02);
}

TEST_CASE("naive and active-set engines sample the same law") {
  const int L = 6;
  std::vector<double> a, b;
  for (int k = 0; k < 10000; ++k) {
    a.push_back(simulate_heatbath(DynamicsSpec::free(L, 0.5, Engine::naive), Path::maximal(L), 30, 1, {}, k)
                    .final_state.height(0));
    b.push_back(simulate_heatbath(DynamicsSpec::free(L, 0.5, Engine::active_set), Path::maximal(L), 30, 2, {}, k)
                    .final_state.height(0));
  }
  // discrete data: compare the empirical laws directly
  std::map<int, double> pa, pb;
  for (double v : a) pa[static_cast<int>(v)] += 1e-4;
  for (double v : b) pb[static_cast<int>(v)] += 1e-4;
  for (const auto& [h, p] : pa) CHECK(std::fabs(p - pb[h]) < 4 * std::sqrt(2 * p * (1 - p) / 1e4) + 1e-3);
}

TEST_CASE("symmetric pinning gives a flat mean profile") {
  const int L = 6, runs = 4000;
  std::vector<double> h;
  for (int k = 0; k < runs; ++k)
    h.push_back(simulate_heatbath(DynamicsSpec::free(L, 1.0), Path::maximal(L), 400, 5, {}, k).final_state.height(0));
  CHECK(std::fabs(mean(h)) < 3 * stddev(h) / std::sqrt(runs));
}

TEST_CASE("sampled observables and targets") {
  SimOptions o;
  o.sample_times = {0, 10, 20};
  o.observables = {height0};
  const auto r = simulate_heatbath(DynamicsSpec::free(5, 0.5), Path::maximal(5), 30, 1, o);
  REQUIRE(r.samples.size() == 3);
  CHECK(r.samples[0][0] == 5);

  SimOptions t;
  t.target = [](const State& s) { return s.h[s.L] < 0; };
  const auto h = simulate_heatbath(DynamicsSpec::free(5, 0.5), Path::maximal(5), 1e6, 2, t);
  CHECK(h.hit);
  CHECK(h.final_state.height(0) < 0);
  CHECK_THROWS(simulate_heatbath(DynamicsSpec::free(5, 0.5), Path::maximal(4), 1, 1));
}

TEST_CASE("grand coupling") {
  const auto spec = DynamicsSpec::free(8, 0.5);
  const auto same = grand_coupling_run(spec, {Path::maximal(8), Path::maximal(8)}, 10, 1, 0, {}, true);
  CHECK(same.coalescence_time == 0);

  const auto r = grand_coupling_order_check(10, 0.5, 1000000, 3);
  CHECK(r.events >= 1000000);
  CHECK(r.violations == 0);

  // coalescence is absorbing along the coupled run
  std::vector<double> ts;
  for (int q = 0; q <= 40; ++q) ts.push_back(50.0 * q);
  const auto run = grand_coupling_run(spec, {Path::maximal(8), Path::minimal(8)}, 2000, 8, 0, ts);
  for (std::size_t q = 1; q < run.coalesced.size(); ++q) CHECK(run.coalesced[q] >= run.coalesced[q - 1]);
  for (char v : run.ordered) CHECK(v);
}

TEST_CASE("gap from coalescence times") {
  const auto pc = build_generator(8, 0.5, BoundaryPair::free(8));
  const double exact = solve_spectrum(pc.chain).gap;
  const auto e = gap_estimate_from_coalescence(DynamicsSpec::free(8, 0.5), 3000, 2000, 11);
  CHECK(std::fabs(e.gap / exact - 1) < 0.25);
  CHECK(e.lo <= e.hi);
}

TEST_CASE("schedules") {
  std::istringstream in("0,10,all\n10,20,-2:2\n");
  const auto s = parse_schedule(in, 4);
  REQUIRE(s.windows.size() == 2);
  CHECK(s.end() == 20);
  CHECK(s.allows(5, 0));
  CHECK(s.allows(15, 4));
  CHECK_FALSE(s.allows(15, 1));
  std::istringstream bad("5,1,all\n");
  CHECK_THROWS(parse_schedule(bad, 4).validate(4));
  const auto m = muretto_schedule(12, 1, 100, 2);
  CHECK(m.windows.size() == 3);
  CHECK(m.end() == 202);
}
