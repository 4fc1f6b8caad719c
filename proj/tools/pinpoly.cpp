// pinpoly: experiment runner for the pinned polymer toolkit.
#include <pinpoly/experiments.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

using namespace pinpoly;

namespace {

struct Flags {
  std::string config, out, format, L, lambda, target, schedule, mode, input, xcol = "L", ycol = "gap", band, which;
  std::optional<long long> seed;
  std::optional<int> jobs;
  std::optional<long> runs;
  std::optional<double> horizon;
  std::string start = "top";
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

// "4,6,8" or "4..12"
json int_list(const std::string& s) {
  json a = json::array();
  try {
    const auto dots = s.find("..");
    if (dots != std::string::npos) {
      const int lo = std::stoi(s.substr(0, dots)), hi = std::stoi(s.substr(dots + 2));
      for (int i = lo; i <= hi; ++i) a.push_back(i);
      return a;
    }
    for (const auto& p : split(s, ',')) a.push_back(std::stoi(p));
  } catch (const std::exception&) {
    throw usage_error("bad integer list '" + s + "'");
  }
  return a;
}

json real_list(const std::string& s) {
  json a = json::array();
  try {
    for (const auto& p : split(s, ',')) a.push_back(std::stod(p));
  } catch (const std::exception&) {
    throw usage_error("bad number list '" + s + "'");
  }
  return a;
}

json load_config(const Flags& f, const std::string& experiment) {
  json user = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw usage_error("cannot open config '" + f.config + "'");
    try {
      user = json::parse(in);
    } catch (const json::parse_error& e) {
      throw usage_error(std::string("config is not valid JSON: ") + e.what());
    }
    if (!user.is_object()) throw usage_error("config must be a JSON object");
  }
  if (!experiment.empty()) {
    if (user.contains("experiment") && user["experiment"] != experiment)
      throw usage_error("config names experiment '" + user["experiment"].get<std::string>() +
                        "' but the subcommand runs '" + experiment + "'");
    user["experiment"] = experiment;
  }
  if (!user.contains("experiment")) throw usage_error("no experiment given (use a subcommand or set 'experiment')");
  if (f.seed) user["seed"] = *f.seed;
  if (f.jobs) user["jobs"] = *f.jobs;
  if (!f.format.empty()) user["format"] = f.format;
  if (!f.out.empty()) user["out"] = f.out;
  if (!f.L.empty()) user["L"] = int_list(f.L);
  if (!f.lambda.empty()) user["lambda"] = real_list(f.lambda);
  if (f.runs) user["runs"] = *f.runs;
  if (f.horizon) user["horizon"] = *f.horizon;
  if (!f.target.empty()) user["target"] = f.target;
  if (!f.schedule.empty()) user["schedule"] = f.schedule;
  if (!f.mode.empty()) user["mode"] = f.mode;
  return materialize(user);
}

int emit(const Report& r) {
  write_report(r, r.config["out"]);
  if (r.config["format"] == "csv") std::cout << r.to_csv();
  else std::cout << r.to_json().dump(2) << "\n";
  for (const auto& a : r.checks)
    if (!a.passed) std::cerr << (a.hard ? "FAIL " : "note ") << a.name << ": " << a.detail << "\n";
  return r.passed() ? 0 : 1;
}

int run_named(const Flags& f, const std::string& experiment) {
  return emit(run_experiment(load_config(f, experiment)));
}

int cmd_enumerate(const Flags& f) {
  const auto Ls = f.L.empty() ? json::array({4}) : int_list(f.L);
  const double lambda = f.lambda.empty() ? 0.5 : real_list(f.lambda)[0].get<double>();
  if (!(lambda > 0)) throw usage_error("lambda must be > 0");
  const bool csv = f.format != "json";
  json out = json::array();
  if (csv) std::cout << "L,index,path,zeros,crossings,pi,plus,minus,omega_o\n";
  for (int L : Ls) {
    if (L < 1) throw usage_error("L must be >= 1");
    const auto paths = enumerate_paths(L);
    const int ell = default_ell(L);
    const double co = default_co(lambda);
    double Z = 0;
    for (const auto& p : paths) Z += std::pow(lambda, path_stats(p).zeros);
    for (std::size_t i = 0; i < paths.size(); ++i) {
      const auto st = path_stats(paths[i]);
      const auto cl = classify(paths[i], ell, co);
      const double pi = std::pow(lambda, st.zeros) / Z;
      if (csv)
        std::cout << L << "," << i << "," << paths[i].str() << "," << st.zeros << "," << st.crossings << "," << fmt17(pi)
                  << "," << cl.plus << "," << cl.minus << "," << cl.o << "\n";
      else
        out.push_back({{"L", L}, {"index", i}, {"path", paths[i].str()}, {"zeros", st.zeros},
                       {"crossings", st.crossings}, {"pi", pi}, {"plus", cl.plus}, {"minus", cl.minus}, {"omega_o", cl.o}});
    }
  }
  if (!csv) std::cout << json{{"version", version_string}, {"lambda", lambda}, {"paths", out}}.dump(2) << "\n";
  return 0;
}

int cmd_simulate(const Flags& f) {
  const int L = f.L.empty() ? 10 : int_list(f.L)[0].get<int>();
  const double lambda = f.lambda.empty() ? 0.5 : real_list(f.lambda)[0].get<double>();
  const std::uint64_t seed = f.seed.value_or(1);
  const double horizon = f.horizon.value_or(1000.0);
  const long runs = f.runs.value_or(1);
  if (L < 1 || !(lambda > 0) || !(horizon > 0) || runs < 1) throw usage_error("simulate: bad L, lambda, horizon or runs");
  DynamicsSpec spec = DynamicsSpec::free(L, lambda);
  Schedule sched;
  const int ell = default_ell(L);
  if (!f.schedule.empty()) {
    if (f.schedule == "muretto") {
      sched = muretto_schedule(L, ell, std::pow(L, 2.1), std::pow(L, 0.1));
      spec.bounds = {omega_plus_floor(L, ell), Path::maximal(L)};
    } else {
      std::ifstream in(f.schedule);
      if (!in) throw usage_error("cannot open schedule '" + f.schedule + "'");
      sched = parse_schedule(in, L);
    }
    sched.validate(L);
  }
  Path start = f.start == "bottom" ? spec.bounds.floor : spec.bounds.ceil;
  if (f.start != "top" && f.start != "bottom") throw usage_error("--start must be top or bottom");

  if (!f.target.empty()) {
    if (f.target != "s0-minus" && f.target != "omega-minus") throw usage_error("--target must be s0-minus or omega-minus");
    if (L > default_L_max) throw capacity_error("--target needs L <= " + std::to_string(default_L_max));
    if (!f.schedule.empty()) throw usage_error("--target runs the free dynamics; drop --schedule");
    const auto t = tunnel_experiment(L, lambda, static_cast<int>(runs), seed, horizon,
                                     f.target == "s0-minus" ? TunnelTarget::s0_minus : TunnelTarget::omega_minus,
                                     f.jobs.value_or(1));
    const json summary = {{"version", version_string}, {"seed", seed},        {"n_runs", runs},
                          {"L", L},                    {"lambda", lambda},    {"target", f.target},
                          {"t_rel", t.t_rel},          {"tau_mean", t.tau_mean}, {"tau_ks_p", t.ks_p},
                          {"censored_count", t.censored}};
    if (f.format == "csv") {
      std::cout << "# " << summary.dump() << "\nrun,tau,censored\n";
      for (long k = 0; k < runs; ++k) std::cout << k << "," << fmt17(t.tau[k]) << "," << (t.tau[k] >= horizon) << "\n";
    } else {
      std::cout << summary.dump(2) << "\n";
    }
    return 0;
  }

  // trajectory dump: one row per move
  SimOptions o;
  o.record_events = true;
  if (!sched.windows.empty()) o.schedule = &sched;
  std::cout << "# " << version_string << " L=" << L << " lambda=" << fmt17(lambda) << " seed=" << seed << "\n";
  std::cout << "run,t,event_site,height_0,zeros,area\n";
  for (long k = 0; k < runs; ++k) {
    const auto r = simulate_heatbath(spec, start, horizon, seed, o, static_cast<std::uint64_t>(k));
    State s(start);
    int zeros = 0;
    long area = 0;
    for (int q = 0; q <= 2 * L; ++q) {
      zeros += (q > 0 && q < 2 * L && s.h[q] == 0);
      area += s.h[q];
    }
    for (std::size_t e = 0; e < r.event_times.size(); ++e) {
      const int p = r.event_sites[e] + L;
      const int before = s.h[p];
      const int after = 2 * s.h[p - 1] - before;
      s.h[p] = after;
      zeros += (after == 0) - (before == 0);
      area += after - before;
      std::cout << k << "," << fmt17(r.event_times[e]) << "," << r.event_sites[e] << "," << s.h[L] << "," << zeros << ","
                << area << "\n";
    }
  }
  return 0;
}

int cmd_scaling(const Flags& f) {
  if (f.input.empty()) {
    const std::string which = f.which.empty() ? "crossing-scaling" : f.which;
    if (which != "crossing-scaling" && which != "sigma-scaling")
      throw usage_error("--experiment must be crossing-scaling or sigma-scaling");
    return run_named(f, which);
  }
  std::ifstream in(f.input);
  if (!in) throw usage_error("cannot open '" + f.input + "'");
  const auto [xs, ys] = read_csv_columns(in, f.xcol, f.ycol);
  double lo = -2.6, hi = -2.4;
  if (!f.band.empty()) {
    const auto b = real_list(f.band);
    if (b.size() != 2 || !(b[0] < b[1])) throw usage_error("--band must be lo,hi");
    lo = b[0];
    hi = b[1];
  }
  const auto s = scaling_report(xs, ys, lo, hi);
  json j = to_json(s);
  j["version"] = version_string;
  j["input"] = f.input;
  j["columns"] = {f.xcol, f.ycol};
  if (f.format == "csv")
    std::cout << "slope,intercept,r2,points,band_lo,band_hi,passed\n"
              << fmt17(s.slope) << "," << fmt17(s.intercept) << "," << fmt17(s.r2) << "," << s.points << ","
              << fmt17(lo) << "," << fmt17(hi) << "," << s.passed << "\n";
  else
    std::cout << j.dump(2) << "\n";
  if (!s.passed) std::cerr << "FAIL scaling: " << s.message << "\n";
  return s.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pinned polymer dynamics: exact spectra, simulation and scaling experiments"};
  app.set_version_flag("--version", std::string(version_string));
  app.require_subcommand(1);
  Flags f;
  auto global = [&](CLI::App* c) {
    c->add_option("--config", f.config, "JSON config file");
    c->add_option("--out", f.out, "directory for <experiment>.json and <experiment>.csv");
    c->add_option("--seed", f.seed, "random seed");
    c->add_option("--jobs", f.jobs, "worker threads");
    c->add_option("--format", f.format, "stdout format")->check(CLI::IsMember({"csv", "json"}));
  };
  auto grid = [&](CLI::App* c) {
    c->add_option("--L", f.L, "list \"4,6,8\" or range \"4..12\"");
    c->add_option("--lambda", f.lambda, "comma-separated pinning strengths");
  };
  struct Sub {
    const char* name;
    const char* help;
    const char* experiment;
  };
  const std::vector<Sub> named = {
      {"identities", "partition-function identities and enumeration oracles", "identities"},
      {"gap", "spectral suite on small L", "spectra-small-L"},
      {"qsd", "killed chain and quasi-stationary distribution", "qsd"},
      {"tunnel", "tunneling times from the maximal path", "metastability-mc"},
      {"couplings", "particle dynamics and coupling experiments", "particle-couplings"},
      {"run", "run the experiment named in --config", ""},
  };
  std::string chosen;
  for (const auto& s : named) {
    auto* c = app.add_subcommand(s.name, s.help);
    global(c);
    grid(c);
    if (std::string(s.name) == "gap" || std::string(s.name) == "qsd")
      c->add_option("--mode", f.mode, "eigensolver")->check(CLI::IsMember({"auto", "dense", "sparse"}));
    if (std::string(s.name) == "tunnel" || std::string(s.name) == "run") {
      c->add_option("--runs", f.runs, "number of runs");
      c->add_option("--horizon", f.horizon, "time horizon per run");
      c->add_option("--target", f.target, "hitting target")->check(CLI::IsMember({"omega-minus", "s0-minus"}));
    }
    if (std::string(s.name) == "run") {
      c->add_option("--schedule", f.schedule, "censoring schedule: preset name or file");
      c->add_option("--mode", f.mode, "eigensolver")->check(CLI::IsMember({"auto", "dense", "sparse"}));
    }
    c->callback([&chosen, s] { chosen = s.name; });
  }
  auto* en = app.add_subcommand("enumerate", "list all bridges with weights and phase labels");
  global(en);
  grid(en);
  auto* sim = app.add_subcommand("simulate", "heat-bath trajectories or hitting times");
  global(sim);
  grid(sim);
  sim->add_option("--runs", f.runs, "number of runs");
  sim->add_option("--horizon", f.horizon, "time horizon");
  sim->add_option("--target", f.target, "hitting target")->check(CLI::IsMember({"omega-minus", "s0-minus"}));
  sim->add_option("--schedule", f.schedule, "censoring schedule: 'muretto' or a file of t0,t1,ranges lines");
  sim->add_option("--start", f.start, "initial path")->check(CLI::IsMember({"top", "bottom"}));
  auto* sc = app.add_subcommand("scaling", "log-log regression of a result table, or a scaling experiment");
  global(sc);
  grid(sc);
  sc->add_option("--input", f.input, "CSV with the columns to fit");
  sc->add_option("--x", f.xcol, "abscissa column (default L)");
  sc->add_option("--y", f.ycol, "value column (default gap)");
  sc->add_option("--band", f.band, "accepted slope band lo,hi");
  sc->add_option("--experiment", f.which, "crossing-scaling or sigma-scaling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    if (en->parsed()) return cmd_enumerate(f);
    if (sim->parsed()) return cmd_simulate(f);
    if (sc->parsed()) return cmd_scaling(f);
    for (const auto& s : named)
      if (chosen == s.name) {
        if (std::string(s.name) == "run" && f.config.empty()) throw usage_error("run needs --config");
        return run_named(f, s.experiment);
      }
    throw usage_error("no subcommand");
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const capacity_error& e) {
    std::cerr << "capacity error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
