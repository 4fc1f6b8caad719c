#pragma once

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "json.hpp"

namespace pinpoly {

using json = nlohmann::json;

inline constexpr const char* version_string = "pinpoly 1.0.0";

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"identities",   "spectra-small-L", "qsd",
                                              "metastability-mc", "sigma-scaling", "crossing-scaling",
                                              "particle-couplings", "censoring"};
  return names;
}

inline std::vector<int> int_range(int lo, int hi) {
  std::vector<int> v;
  for (int i = lo; i <= hi; ++i) v.push_back(i);
  return v;
}

// Every tunable of an experiment with its default value. Keys absent here
// are rejected.
inline json default_config(const std::string& name) {
  json c = {{"experiment", name}, {"seed", 1}, {"jobs", 1}, {"format", "json"}, {"out", ""}};
  if (name == "identities") {
    c["L_max"] = 200;
    c["lambda"] = {0.1, 0.5, 0.9};
    c["tolerance"] = 1e-12;
    c["tail_window"] = {200, 2000};
    c["tail_band"] = {-1.55, -1.45};
    c["oracle_L_max"] = 6;
    c["oracle_lambda"] = {"1/2", "1", "3/2"};
  } else if (name == "spectra-small-L") {
    c["L"] = int_range(3, 8);
    c["lambda"] = {0.3, 0.5, 0.8};
    c["mode"] = "auto";
    c["grid"] = 10;
    c["grid_step"] = 0.2;
    c["random_pairs"] = 3;
    c["jerrum_L"] = {3, 4, 5};
    c["jerrum_lambda"] = 0.5;
    c["tolerance"] = {{"detailed_balance", 1e-12}, {"row_sum", 1e-12}, {"antisymmetry", 1e-10}, {"monotonicity", 1e-10}};
  } else if (name == "qsd") {
    c["L"] = {4, 6, 8};
    c["lambda"] = {0.3, 0.5, 0.8};
    c["mode"] = "auto";
    c["points"] = 50;
    c["tolerance"] = 1e-8;
  } else if (name == "metastability-mc") {
    c["L"] = {10};
    c["lambda"] = {0.5};
    c["runs"] = 1000;
    c["horizon"] = 1e7;
    c["target"] = "s0-minus";
    c["band"] = {0.85, 1.15};
    c["ks_alpha"] = 0.01;
  } else if (name == "sigma-scaling") {
    c["L"] = int_range(4, 12);
    c["lambda"] = {0.5};
    c["band"] = {-2.9, -2.1};
    c["quotient_L"] = int_range(8, 14);
    c["mc_L"] = {16, 24, 32, 48, 64};
    c["n_mc"] = 20000;
    c["bounded_factor"] = 2.0;
  } else if (name == "crossing-scaling") {
    c["k"] = int_range(6, 14);
    c["lambda"] = {0.5};
    c["kernel"] = "rho0";
    c["band"] = {-2.6, -2.4};
  } else if (name == "particle-couplings") {
    c["lambda"] = {0.5};
    c["gap1_L"] = {10, 20, 40};
    c["n2_L"] = 20;
    c["mc_time"] = 2e5;
    c["mc_dt"] = 1.0;
    c["mc_tolerance"] = 0.2;
    c["gapn_L"] = 40;
    c["gapn_n"] = {2, 3, 4, 5};
    c["epsilon1"] = {{"n", 3}, {"L", 50}, {"runs", 4000}};
    c["first_ring"] = {{"L", 50}, {"runs", 20000}};
    c["block"] = {{"K", 2}, {"Delta", 2}, {"L", 200}, {"runs", 20000}};
    c["segment_tail"] = {{"n", {2, 3}}, {"L", {1000, 10000}}, {"band", {0.9, 1.1}}};
  } else if (name == "censoring") {
    c["L"] = {12};
    c["lambda"] = {0.5};
    c["runs"] = 2000;
    c["T2_exponent"] = 2.1;
    c["T1_exponent"] = 0.1;
    c["schedule"] = "muretto";
  } else {
    throw usage_error("unknown experiment '" + name + "'; expected one of identities, spectra-small-L, qsd, "
                      "metastability-mc, sigma-scaling, crossing-scaling, particle-couplings, censoring");
  }
  c["ell"] = nullptr;  // resolved per L below
  c["co"] = nullptr;   // resolved per lambda below
  return c;
}

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw usage_error("config: " + msg);
}

inline void check_same_type(const json& def, const json& v, const std::string& key) {
  if (def.is_null()) return;
  if (def.is_number() && v.is_number()) return;
  if (def.is_array()) {
    require(v.is_array(), "'" + key + "' must be a list");
    return;
  }
  if (def.is_object()) {
    require(v.is_object(), "'" + key + "' must be an object");
    for (auto it = v.begin(); it != v.end(); ++it) {
      require(def.contains(it.key()), "unknown key '" + key + "." + it.key() + "'");
      check_same_type(def[it.key()], it.value(), key + "." + it.key());
    }
    return;
  }
  require(def.type() == v.type(), "'" + key + "' has the wrong type");
}

inline double binomial_count(int L) {
  double c = 1;
  for (int i = 1; i <= L; ++i) c = c * (L + i) / i;
  return c;
}

}  // namespace detail

// Defaults merged with the user's config; values validated; ell and c_o
// materialized so the echoed config is self-describing.
inline json materialize(const json& user) {
  detail::require(user.is_object(), "top level must be an object");
  detail::require(user.contains("experiment") && user["experiment"].is_string(), "missing 'experiment'");
  json c = default_config(user["experiment"].get<std::string>());
  for (auto it = user.begin(); it != user.end(); ++it) {
    detail::require(c.contains(it.key()), "unknown key '" + it.key() + "'");
    detail::check_same_type(c[it.key()], it.value(), it.key());
    if (c[it.key()].is_object()) c[it.key()].update(it.value());
    else c[it.key()] = it.value();
  }
  const std::string name = c["experiment"];
  detail::require(c["seed"].is_number_integer() && c["seed"].get<long long>() >= 0, "'seed' must be a nonnegative integer");
  detail::require(c["jobs"].is_number_integer() && c["jobs"].get<int>() >= 1, "'jobs' must be >= 1");
  detail::require(c["format"] == "json" || c["format"] == "csv", "'format' must be csv or json");
  if (c.contains("lambda"))
    for (const auto& l : c["lambda"]) detail::require(l.is_number() && l.get<double>() > 0, "lambda must be > 0");
  if (c.contains("L"))
    for (const auto& l : c["L"]) detail::require(l.is_number_integer() && l.get<int>() >= 1, "L must be integers >= 1");
  if (c.contains("runs")) detail::require(c["runs"].get<long>() >= 1, "'runs' must be >= 1");
  if (c.contains("horizon")) detail::require(c["horizon"].get<double>() > 0, "'horizon' must be > 0");
  if (c.contains("mode")) {
    const std::string m = c["mode"];
    detail::require(m == "auto" || m == "dense" || m == "sparse", "'mode' must be auto, dense or sparse");
    for (const auto& l : c["L"]) {
      const int L = l.get<int>();
      const double states = detail::binomial_count(L);
      if (m == "dense" && states > dense_capacity) {
        std::ostringstream os;
        os << "dense mode at L = " << L << " needs " << std::setprecision(3) << states
           << " states, above the dense bound of " << dense_capacity << " states";
        throw capacity_error(os.str());
      }
      if (L > default_L_max)
        throw capacity_error("L = " + std::to_string(L) + " exceeds the enumeration bound L_max = " +
                             std::to_string(default_L_max));
    }
  }
  if (c.contains("target"))
    detail::require(c["target"] == "s0-minus" || c["target"] == "omega-minus", "'target' must be s0-minus or omega-minus");
  if (c.contains("band")) detail::require(c["band"].size() == 2 && c["band"][0] < c["band"][1], "'band' must be [lo, hi]");
  if (name == "identities") {
    detail::require(c["L_max"].get<int>() >= 1, "'L_max' must be >= 1");
    detail::require(c["oracle_L_max"].get<int>() <= default_L_max, "'oracle_L_max' too large");
    for (const auto& s : c["oracle_lambda"]) {
      detail::require(s.is_string(), "'oracle_lambda' entries must be rational strings");
      try {
        const rational r(s.get<std::string>());
        detail::require(r > 0, "oracle lambda must be > 0");
      } catch (const std::runtime_error&) {
        throw usage_error("config: bad rational '" + s.get<std::string>() + "'");
      }
    }
  }
  if (name == "metastability-mc")
    for (const auto& l : c["L"])
      if (l.get<int>() > default_L_max)
        throw capacity_error("metastability-mc uses the exact eigenvector: L = " + std::to_string(l.get<int>()) +
                             " exceeds L_max = " + std::to_string(default_L_max));
  if (name == "sigma-scaling")
    for (const auto& l : c["quotient_L"]) detail::require(l.get<int>() <= 14, "'quotient_L' entries must be <= 14");
  if (name == "censoring") detail::require(c["schedule"].is_string(), "'schedule' must be a preset name or a file path");

  // materialized defaults
  json ell = json::object(), co = json::object();
  std::vector<int> Ls;
  if (c.contains("L"))
    for (const auto& l : c["L"]) Ls.push_back(l);
  for (int L : Ls) ell[std::to_string(L)] = default_ell(L);
  if (c.contains("lambda"))
    for (const auto& l : c["lambda"]) {
      const double v = default_co(l.get<double>());
      std::ostringstream key;
      key << std::setprecision(17) << l.get<double>();
      co[key.str()] = std::isfinite(v) ? json(v) : json("inf");
    }
  if (c["ell"].is_null()) c["ell"] = ell;
  if (c["co"].is_null()) c["co"] = co;
  return c;
}

inline std::string git_blob_sha1(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr))
    throw std::runtime_error("sha1 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string config_hash(const json& cfg) { return git_blob_sha1(cfg.dump()); }

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Assertion {
  std::string name;
  bool hard = true;
  bool passed = false;
  std::string detail;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  template <class... T>
  void add(const T&... v) {
    rows.push_back({cell(v)...});
  }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return fmt17(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
};

struct Report {
  std::string experiment;
  json config;
  std::vector<Assertion> checks;
  Table table;
  json results = json::object();

  void check(const std::string& name, bool hard, bool passed, const std::string& detail) {
    checks.push_back({name, hard, passed, detail});
  }
  bool passed() const {
    for (const auto& a : checks)
      if (a.hard && !a.passed) return false;
    return true;
  }
  json to_json() const {
    json j;
    j["version"] = version_string;
    j["config_hash"] = config_hash(config);
    j["config"] = config;
    j["experiment"] = experiment;
    j["passed"] = passed();
    json cs = json::array();
    for (const auto& a : checks)
      cs.push_back({{"name", a.name}, {"kind", a.hard ? "asserted" : "reported"}, {"passed", a.passed}, {"detail", a.detail}});
    j["checks"] = cs;
    j["results"] = results;
    return j;
  }
  std::string to_csv() const {
    std::ostringstream os;
    os << "# " << version_string << "\n# config_hash " << config_hash(config) << "\n# config " << config.dump() << "\n";
    for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
    os << "\n";
    for (const auto& r : table.rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << "\n";
    }
    return os.str();
  }
};

// ---------------------------------------------------------------------------

struct ScalingSummary {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  int points = 0;
  double band_lo = 0, band_hi = 0;
  bool passed = false;
  std::string message;
};

inline ScalingSummary scaling_report(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi) {
  if (x.size() != y.size()) throw usage_error("scaling_report: column lengths differ");
  if (x.size() < 5)
    throw usage_error("scaling_report: need at least 5 (L, value) points, got " + std::to_string(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] > 0) || !(y[i] > 0)) throw usage_error("scaling_report: log-log fit needs positive values");
  const auto f = loglog_fit(x, y);
  ScalingSummary s;
  s.slope = f.slope;
  s.intercept = f.intercept;
  s.r2 = f.r2;
  s.points = f.points;
  s.band_lo = lo;
  s.band_hi = hi;
  s.passed = f.slope >= lo && f.slope <= hi;
  std::ostringstream os;
  os << "slope " << std::setprecision(6) << f.slope << (s.passed ? " within " : " outside ") << "band [" << lo << ", "
     << hi << "]";
  s.message = os.str();
  return s;
}

inline json to_json(const ScalingSummary& s) {
  return {{"slope", s.slope}, {"intercept", s.intercept}, {"r2", s.r2}, {"points", s.points},
          {"band", {s.band_lo, s.band_hi}}, {"passed", s.passed}, {"message", s.message}};
}

// Reads columns xcol, ycol from a CSV (lines starting with '#' skipped).
inline std::pair<std::vector<double>, std::vector<double>> read_csv_columns(std::istream& in, const std::string& xcol,
                                                                             const std::string& ycol) {
  std::string line;
  std::vector<std::string> head;
  std::vector<double> xs, ys;
  int ix = -1, iy = -1;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string c;
    while (std::getline(ss, c, ',')) out.push_back(c);
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line);
    if (head.empty()) {
      head = cells;
      for (std::size_t i = 0; i < head.size(); ++i) {
        if (head[i] == xcol) ix = static_cast<int>(i);
        if (head[i] == ycol) iy = static_cast<int>(i);
      }
      if (ix < 0 || iy < 0) throw usage_error("scaling_report: missing column '" + (ix < 0 ? xcol : ycol) + "'");
      continue;
    }
    if (static_cast<int>(cells.size()) <= std::max(ix, iy)) continue;
    try {
      xs.push_back(std::stod(cells[ix]));
      ys.push_back(std::stod(cells[iy]));
    } catch (const std::exception&) {
      throw usage_error("scaling_report: non-numeric cell in line '" + line + "'");
    }
  }
  return {xs, ys};
}

// ---------------------------------------------------------------------------
// Experiments.

namespace detail {

inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline Mode mode_of(const json& c) {
  const std::string m = c.value("mode", "auto");
  return m == "dense" ? Mode::dense : m == "sparse" ? Mode::sparse : Mode::automatic;
}

inline void run_identities(const json& c, Report& r) {
  r.table.columns = {"check", "L", "lambda", "value"};
  const int max_len = 2 * c["L_max"].get<int>();
  const double tol = c["tolerance"];
  for (double l : c["lambda"]) {
    const double e = reflection_identity_error(max_len, l);
    r.table.add(std::string("reflection_rel_error"), max_len / 2, l, e);
    r.check("reflection identity, lambda=" + num(l), true, e < tol, "max rel error " + num(e) + " over lengths <= " + std::to_string(max_len));
    const double lo = c["tail_band"][0], hi = c["tail_band"][1];
    const auto f = kernel_tail(l, c["tail_window"][0], c["tail_window"][1]);
    r.table.add(std::string("kernel_tail_exponent"), 0, l, f.exponent);
    r.check("kernel tail exponent, lambda=" + num(l), true, f.exponent >= lo && f.exponent <= hi, "slope " + num(f.exponent));
  }
  const int Lo = c["oracle_L_max"];
  long compared = 0, bad = 0;
  std::string first;
  double mu_err = 0;
  for (int L = 1; L <= Lo; ++L)
    for (const auto& s : c["oracle_lambda"]) {
      const rational lam(s.get<std::string>());
      const auto o = oracle_equivalence(L, lam);
      compared += o.compared;
      bad += o.mismatches;
      if (first.empty() && !o.failures.empty()) first = o.failures[0];
      r.table.add(std::string("oracle_mismatches"), L, static_cast<double>(lam), static_cast<double>(o.mismatches));
      if (L >= 2) mu_err = std::max(mu_err, crossing_count_mu_error(L, lam));
    }
  r.check("closed forms equal enumeration (exact)", true, bad == 0,
          std::to_string(bad) + " mismatches in " + std::to_string(compared) + " comparisons" + (first.empty() ? "" : "; first: " + first));
  r.check("crossing-count chain stationary law", true, mu_err < 1e-12, "max rel error " + num(mu_err));
  r.results = {{"oracle_comparisons", compared}, {"oracle_mismatches", bad}, {"crossing_count_mu_error", mu_err}};
}

inline void run_spectra(const json& c, Report& r) {
  r.table.columns = {"L", "lambda", "states", "gap", "t_rel", "t_mix", "sandwich_hi", "detailed_balance", "row_sum",
                     "antisymmetry", "monotonicity", "submult_excess", "pair_bound_excess", "decay_rel_error",
                     "decay_rate_error", "density_violation", "g_top_ratio", "l1_sign_dist", "flagged"};
  const auto& tol = c["tolerance"];
  SuiteOptions opt;
  opt.mode = mode_of(c);
  opt.grid = c["grid"];
  opt.grid_step = c["grid_step"];
  opt.random_pairs = c["random_pairs"];
  opt.seed = c["seed"];
  json recs = json::array();
  for (int L : c["L"])
    for (double l : c["lambda"]) {
      const auto s = spectral_suite(L, l, opt);
      r.table.add(L, l, s.states, s.gap, s.t_rel, s.t_mix, s.sandwich_hi, s.db_error, s.row_error, s.antisym_error,
                  s.mono_violation, s.submult_excess, s.pair_bound_excess, s.decay_rel_error, s.decay_rate_error,
                  s.density_violation, s.g_top_ratio, s.l1_sign_dist, s.flagged);
      const std::string at = "L=" + std::to_string(L) + " lambda=" + num(l);
      r.check("detailed balance " + at, true, s.db_error < tol["detailed_balance"].get<double>(), num(s.db_error));
      r.check("row sums " + at, true, s.row_error < tol["row_sum"].get<double>(), num(s.row_error));
      r.check("g antisymmetric " + at, true, s.antisym_error < tol["antisymmetry"].get<double>(), num(s.antisym_error));
      r.check("g increasing " + at, true, s.mono_violation <= tol["monotonicity"].get<double>(), num(s.mono_violation));
      r.check("T_rel <= T_mix <= (1 - log pi_min) T_rel " + at, true, s.sandwich,
              num(s.t_rel) + " <= " + num(s.t_mix) + " <= " + num(s.sandwich_hi));
      r.check("submultiplicativity " + at, true, s.submult_excess <= 1e-12, "max excess " + num(s.submult_excess));
      r.check("4L^2 comparison " + at, true, s.pair_bound_excess <= 1e-12, "max excess " + num(s.pair_bound_excess));
      if (!std::isnan(s.density_violation))
        r.check("density stays increasing " + at, true, s.density_violation <= 1e-10, num(s.density_violation));
      if (!std::isnan(s.decay_rate_error)) {
        r.check("decay rate of extremal distance " + at, true, s.decay_rate_error < 0.02, num(s.decay_rate_error));
        r.check("-(1/t) log d(t) at t = 20 T_rel " + at, false, s.decay_rel_error < 0.02, num(s.decay_rel_error));
      }
      recs.push_back({{"label", "polymer"}, {"L", L}, {"lambda", l}, {"gap", s.gap}, {"t_rel", s.t_rel},
                      {"t_mix(1/2e)", s.t_mix}, {"states", s.states}, {"dense", s.dense},
                      {"checks", {{"detailed_balance", s.db_error}, {"row_sum", s.row_error},
                                  {"antisymmetry", s.antisym_error}, {"monotonicity", s.mono_violation},
                                  {"sandwich", s.sandwich}, {"submultiplicativity", s.submult_excess},
                                  {"pair_bound", s.pair_bound_excess}}},
                      {"g_top_ratio", s.g_top_ratio}, {"l1_sign_dist", s.l1_sign_dist}, {"flagged", s.flagged}});
    }
  json jer = json::array();
  const double jl = c["jerrum_lambda"];
  for (int L : c["jerrum_L"]) {
    auto pc = build_generator(L, jl, BoundaryPair::free(L));
    const auto j = jerrum_bound(pc.chain, sigma_blocks(pc.space));
    const std::string at = "L=" + std::to_string(L) + " lambda=" + num(jl);
    r.check("Jerrum decomposition bound " + at, true, j.holds, "gap " + num(j.gap) + " >= bound " + num(j.bound));
    jer.push_back({{"L", L}, {"lambda", jl}, {"gap", j.gap}, {"bound", j.bound}, {"lambda_bar", j.lambda_bar},
                   {"lambda_min", std::isfinite(j.lambda_min) ? json(j.lambda_min) : json("inf")},
                   {"gamma", j.gamma}, {"blocks", j.blocks}, {"holds", j.holds}});
  }
  r.results = {{"records", recs}, {"jerrum", jer}};
}

inline void run_qsd(const json& c, Report& r) {
  r.table.columns = {"L", "lambda", "gap", "gamma", "pi_gamma", "gamma_t_rel", "survival_error", "flagged"};
  const double tol = c["tolerance"];
  json recs = json::array();
  for (int L : c["L"])
    for (double l : c["lambda"]) {
      const auto q = qsd_report(L, l, c["points"], mode_of(c));
      r.table.add(L, l, q.gap, q.gamma, q.pi_gamma, q.ratio, q.survival_error, q.flagged);
      const std::string at = "L=" + std::to_string(L) + " lambda=" + num(l);
      r.check("survival from the QSD is exponential " + at, true, q.survival_error < tol, "sup error " + num(q.survival_error));
      r.check("pi(Gamma) <= gamma T_rel <= 1 " + at, true, q.gamma_bracket, num(q.pi_gamma) + " <= " + num(q.ratio) + " <= 1");
      recs.push_back({{"label", "polymer/killed"}, {"L", L}, {"lambda", l}, {"gap", q.gap}, {"t_rel", q.t_rel},
                      {"gamma_Gamma", q.gamma}, {"pi_Gamma", q.pi_gamma}, {"flagged", q.flagged},
                      {"checks", {{"gamma_bracket", q.gamma_bracket}, {"survival_error", q.survival_error}}}});
    }
  r.results = {{"records", recs}};
}

inline void run_metastability(const json& c, Report& r) {
  r.table.columns = {"L", "lambda", "run", "tau", "censored"};
  const auto target = c["target"] == "omega-minus" ? TunnelTarget::omega_minus : TunnelTarget::s0_minus;
  json recs = json::array();
  for (int L : c["L"])
    for (double l : c["lambda"]) {
      if (L > default_L_max) throw capacity_error("metastability-mc needs the exact eigenvector: L <= " + std::to_string(default_L_max));
      const auto t = tunnel_experiment(L, l, c["runs"], c["seed"], c["horizon"], target, c["jobs"]);
      for (int k = 0; k < t.runs; ++k) r.table.add(L, l, k, t.tau[k], t.tau[k] >= c["horizon"].get<double>());
      const std::string at = "L=" + std::to_string(L) + " lambda=" + num(l);
      const double lo = c["band"][0], hi = c["band"][1];
      r.check("mean tau / (2 T_rel) in band " + at, false, t.ratio >= lo && t.ratio <= hi, num(t.ratio));
      r.check("KS vs exponential " + at, false, t.ks_p > c["ks_alpha"].get<double>(), "p = " + num(t.ks_p));
      recs.push_back({{"seed", c["seed"]}, {"n_runs", t.runs}, {"L", L}, {"lambda", l}, {"t_rel", t.t_rel},
                      {"tau_mean", t.tau_mean}, {"tau_ks_p", t.ks_p}, {"tau_ks_stat", t.ks_stat},
                      {"censored_count", t.censored}, {"ratio", t.ratio}, {"occupation_ratio", t.occupation_ratio}});
    }
  r.results = {{"records", recs}};
}

inline void run_sigma(const json& c, Report& r) {
  r.table.columns = {"L", "n", "lambda", "gap", "method", "quotient", "quotient_stderr", "scaled", "middle_mass"};
  const double l = c["lambda"][0];
  std::vector<double> xs, ys;
  bool q_ok = true;
  for (int L : c["L"]) {
    const auto row = sigma_row_exact(L, l);
    xs.push_back(L);
    ys.push_back(row.gap);
    q_ok = q_ok && row.quotient >= row.gap * (1 - 1e-12);
    r.table.add(L, 0, l, row.gap, std::string("sigma-exact"), row.quotient, 0.0, row.scaled, row.middle_mass);
  }
  const auto fit = scaling_report(xs, ys, c["band"][0], c["band"][1]);
  r.check("sigma-chain gap slope", true, fit.passed, fit.message);
  r.check("quotient >= exact gap at every exact L", true, q_ok, "");
  std::vector<SigmaScalingRow> rows;
  for (int L : c["quotient_L"]) rows.push_back(sigma_row_exact(L, l));
  std::vector<SigmaScalingRow> mc(c["mc_L"].size());
  parallel_for(static_cast<int>(mc.size()), c["jobs"], [&](int k) {
    mc[k] = sigma_row_mc(c["mc_L"][k], l, c["n_mc"], c["seed"].get<std::uint64_t>() + k);
  });
  for (auto& m : mc) rows.push_back(m);
  for (const auto& q : rows)
    if (q.exact) r.table.add(q.L, 0, l, q.gap, std::string("quotient-exact"), q.quotient, 0.0, q.scaled, q.middle_mass);
    else r.table.add(q.L, 0, l, q.gap, std::string("quotient-mc"), q.quotient, q.quotient_err, q.scaled, q.middle_mass);
  const double factor = c["bounded_factor"];
  double mx = 0;
  for (const auto& q : rows) mx = std::max(mx, q.scaled);
  r.check("quotient L^{5/2} / log L bounded", false, bounded_series(rows, factor),
          "max " + num(mx) + " vs " + num(factor) + " x " + num(rows.front().scaled));
  std::vector<double> ml, mm;
  for (const auto& q : rows) {
    ml.push_back(q.L);
    mm.push_back(q.middle_mass);
  }
  const auto mid = loglog_fit(ml, mm);
  r.results = {{"gap_fit", to_json(fit)}, {"middle_mass_slope", mid.slope}, {"bounded_max", mx}};
}

inline void run_crossing(const json& c, Report& r) {
  r.table.columns = {"L", "n", "lambda", "gap", "method", "ramp_bound"};
  const double l = c["lambda"][0];
  const bool rho0 = c["kernel"] == "rho0";
  std::vector<double> xs, ys;
  bool ramp_ok = true;
  for (int k : c["k"]) {
    const int L = 1 << k;
    const auto g = single_crossing_gap(L, rho0 ? RhoKind::rho0 : RhoKind::rho, l);
    xs.push_back(L);
    ys.push_back(g.gap);
    ramp_ok = ramp_ok && g.ramp_bound >= g.gap;
    r.table.add(L, 1, l, g.gap, std::string(rho0 ? "rho0-tridiagonal" : "rho-tridiagonal"), g.ramp_bound);
  }
  const auto fit = scaling_report(xs, ys, c["band"][0], c["band"][1]);
  r.check("single-crossing gap slope", true, fit.passed, fit.message);
  r.check("ramp bound >= gap", true, ramp_ok, "");
  r.results = {{"fit", to_json(fit)}};
}

inline json wilson_json(const CouplingStats& s) {
  return {{"runs", s.runs}, {"successes", s.successes}, {"p", s.p.estimate}, {"wilson_lo", s.p.lo},
          {"wilson_hi", s.p.hi}, {"alpha_min", s.alpha_min}, {"bound", s.bound}};
}

inline void run_particles(const json& c, Report& r) {
  r.table.columns = {"L", "n", "lambda", "gap", "method"};
  const double l = c["lambda"][0];
  const std::uint64_t seed = c["seed"];
  json res;
  for (int L : c["gap1_L"]) {
    const auto ker = make_kernel<double>(2 * L, l);
    const double g = particle_gap_exact(1, L, ker);
    r.table.add(L, 1, l, g, std::string("exact"));
    r.check("gap_eq^1 = 1 at L=" + std::to_string(L), true, std::fabs(g - 1) < 1e-10, num(g));
  }
  {
    const int L = c["n2_L"];
    const auto ker = make_kernel<double>(2 * L, l);
    const double ex = particle_gap_exact(2, L, ker);
    const auto mc = particle_gap_mc(2, L, ker, c["mc_time"], c["mc_dt"], seed);
    r.table.add(L, 2, l, ex, std::string("exact"));
    r.table.add(L, 2, l, mc.gap, std::string("mc-autocorrelation"));
    const double rel = std::fabs(mc.gap - ex) / ex;
    r.check("gap_eq^2 exact vs MC", false, rel <= c["mc_tolerance"].get<double>(),
            num(ex) + " vs " + num(mc.gap) + " (rel " + num(rel) + ")");
    res["gap2"] = {{"exact", ex}, {"mc", mc.gap}, {"mc_r2", mc.r2}, {"rel_diff", rel}};
  }
  {
    const int L = c["gapn_L"];
    const auto ker = make_kernel<double>(2 * L, l);
    json arr = json::array();
    std::vector<double> ns, lg;
    for (int n : c["gapn_n"]) {
      const double g = particle_gap_exact(n, L, ker);
      r.table.add(L, n, l, g, std::string("exact"));
      arr.push_back({{"n", n}, {"gap", g}});
      ns.push_back(n);
      lg.push_back(std::log(g));
    }
    res["gap_n"] = arr;
    if (ns.size() >= 2) {
      const auto f = linear_fit(ns, lg);
      res["gap_n_log_slope"] = f.slope;
    }
  }
  {
    const auto& e = c["epsilon1"];
    const int L = e["L"], n = e["n"];
    const auto ker = make_kernel<double>(2 * L, l);
    const auto s = epsilon1_experiment(n, L, ker, e["runs"], seed);
    r.check("packed-left hit before n^2 >= alpha^n / 2", false, s.p.hi >= s.bound,
            num(s.p.estimate) + " [" + num(s.p.lo) + ", " + num(s.p.hi) + "] vs " + num(s.bound));
    res["epsilon1"] = wilson_json(s);
  }
  {
    const auto& e = c["first_ring"];
    const int L = e["L"];
    const auto ker = make_kernel<double>(2 * L, l);
    const auto s = first_ring_experiment(L, ker, e["runs"], seed);
    const double sd = std::sqrt(s.bound * (1 - s.bound) / s.runs);
    r.check("single particle: end hit at first ring", false, std::fabs(s.p.estimate - s.bound) <= 3 * sd,
            num(s.p.estimate) + " vs alpha " + num(s.bound));
    res["first_ring"] = wilson_json(s);
  }
  {
    const auto& e = c["block"];
    const int L = e["L"];
    const auto ker = make_kernel<double>(2 * L, l);
    const auto s = block_coupling_experiment(e["K"], e["Delta"], L, ker, e["runs"], seed);
    r.check("block coupling coalesces with positive probability", false, s.successes > 0,
            num(s.p.estimate) + " [" + num(s.p.lo) + ", " + num(s.p.hi) + "]");
    res["block"] = wilson_json(s);
  }
  {
    const auto& u = c["segment_tail"];
    const double lo = u["band"][0], hi = u["band"][1];
    json arr = json::array();
    for (int n : u["n"])
      for (int L : u["L"]) {
        const auto t = first_segment_tail(n, L, l);
        r.check("(n+1) tail in band n=" + std::to_string(n) + " L=" + std::to_string(L), false,
                t.scaled >= lo && t.scaled <= hi, num(t.scaled));
        arr.push_back({{"n", n}, {"L", L}, {"tail", t.tail}, {"scaled", t.scaled}, {"doney_ratio", t.doney_ratio}});
      }
    res["segment_tail"] = arr;
  }
  r.results = res;
}

inline void run_censoring(const json& c, Report& r) {
  r.table.columns = {"L", "lambda", "run", "area_censored", "area_uncensored"};
  json recs = json::array();
  for (int L : c["L"])
    for (double l : c["lambda"]) {
      const int ell = c["ell"].contains(std::to_string(L)) ? c["ell"][std::to_string(L)].get<int>() : default_ell(L);
      const double T2 = std::pow(L, c["T2_exponent"].get<double>()), T1 = std::pow(L, c["T1_exponent"].get<double>());
      Schedule sched;
      const std::string s = c["schedule"];
      if (s == "muretto") {
        sched = muretto_schedule(L, ell, T2, T1);
      } else {
        std::ifstream in(s);
        if (!in) throw usage_error("cannot open schedule file '" + s + "'");
        sched = parse_schedule(in, L);
      }
      sched.validate(L);
      const double T = sched.end();
      DynamicsSpec spec{L, l, {omega_plus_floor(L, ell), Path::maximal(L)}, {}, Engine::naive};
      const int runs = c["runs"];
      std::vector<double> a(runs), b(runs);
      auto area = [](const Path& p) {
        double s = 0;
        for (int q = 0; q <= 2 * p.L(); ++q) s += p.at(q);
        return s;
      };
      parallel_for(runs, c["jobs"], [&](int k) {
        SimOptions o;
        o.schedule = &sched;
        a[k] = area(simulate_heatbath(spec, Path::maximal(L), T, c["seed"], o, 2 * k).final_state);
        SimOptions u;
        b[k] = area(simulate_heatbath(spec, Path::maximal(L), T, c["seed"], u, 2 * k + 1).final_state);
      });
      for (int k = 0; k < runs; ++k) r.table.add(L, l, k, a[k], b[k]);
      // censored law should dominate: its CDF lies below, up to sampling error
      std::vector<double> sa(a), sb(b);
      std::sort(sa.begin(), sa.end());
      std::sort(sb.begin(), sb.end());
      double worst = 0;
      for (double v : sa) {
        const double fa = static_cast<double>(std::upper_bound(sa.begin(), sa.end(), v) - sa.begin()) / runs;
        const double fb = static_cast<double>(std::upper_bound(sb.begin(), sb.end(), v) - sb.begin()) / runs;
        worst = std::max(worst, fa - fb);
      }
      const double crit = 1.36 * std::sqrt(2.0 / runs);
      const std::string at = "L=" + std::to_string(L) + " lambda=" + num(l);
      r.check("censored area dominates uncensored " + at, false, worst <= crit,
              "max CDF excess " + num(worst) + " (5% one-sided band " + num(crit) + ")");
      recs.push_back({{"L", L}, {"lambda", l}, {"ell", ell}, {"T", T}, {"runs", runs}, {"mean_censored", mean(a)},
                      {"mean_uncensored", mean(b)}, {"cdf_excess", worst}, {"windows", sched.windows.size()}});
    }
  r.results = {{"records", recs}};
}

}  // namespace detail

// Runs a materialized config.
inline Report run_experiment(const json& config) {
  Report r;
  r.config = config;
  r.experiment = config["experiment"];
  const auto& n = r.experiment;
  if (n == "identities") detail::run_identities(config, r);
  else if (n == "spectra-small-L") detail::run_spectra(config, r);
  else if (n == "qsd") detail::run_qsd(config, r);
  else if (n == "metastability-mc") detail::run_metastability(config, r);
  else if (n == "sigma-scaling") detail::run_sigma(config, r);
  else if (n == "crossing-scaling") detail::run_crossing(config, r);
  else if (n == "particle-couplings") detail::run_particles(config, r);
  else if (n == "censoring") detail::run_censoring(config, r);
  else throw usage_error("unknown experiment '" + n + "'");
  return r;
}

inline void write_report(const Report& r, const std::string& dir) {
  if (dir.empty()) return;
  const std::string base = dir + "/" + r.experiment;
  std::ofstream j(base + ".json"), c(base + ".csv");
  if (!j || !c) throw usage_error("cannot write reports under '" + dir + "'");
  j << r.to_json().dump(2) << "\n";
  c << r.to_csv();
}

}  // namespace pinpoly
