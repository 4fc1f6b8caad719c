#include <catch_amalgamated.hpp>

#include <pinpoly/experiments.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pinpoly;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

std::string cli() {
  const char* p = std::getenv("PINPOLY_CLI");
  return p ? p : "pinpoly";
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("pinpoly_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Result run(const std::string& args) {
  Result r;
  const std::string cmd = cli() + " " + args + " 2>&1";
  FILE* f = popen(cmd.c_str(), "r");
  REQUIRE(f);
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), buf.size(), f)) r.out += buf.data();
  const int st = pclose(f);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("identities run and pass") {
  const auto d = scratch("ident");
  const auto r = run("identities --out " + d.string() + " --format json");
  CHECK(r.code == 0);
  const auto j = json::parse(slurp(d / "identities.json"));
  CHECK(j["passed"] == true);
  CHECK(j["version"] == version_string);
  CHECK(j["config_hash"].get<std::string>().size() == 40);
  CHECK(j["config_hash"] == config_hash(j["config"]));
  CHECK(fs::exists(d / "identities.csv"));
}

TEST_CASE("reruns are byte-identical") {
  const auto d = scratch("rerun");
  REQUIRE(run("gap --L 3..5 --lambda 0.5 --seed 4 --out " + d.string()).code == 0);
  const auto csv = slurp(d / "spectra-small-L.csv"), js = slurp(d / "spectra-small-L.json");
  REQUIRE(run("gap --L 3..5 --lambda 0.5 --seed 4 --out " + d.string()).code == 0);
  CHECK(slurp(d / "spectra-small-L.csv") == csv);
  CHECK(slurp(d / "spectra-small-L.json") == js);
  REQUIRE(run("tunnel --L 6 --runs 20 --horizon 1e6 --seed 3 --out " + d.string()).code <= 1);
  const auto t = slurp(d / "metastability-mc.json");
  REQUIRE(run("tunnel --L 6 --runs 20 --horizon 1e6 --seed 3 --out " + d.string()).code <= 1);
  CHECK(slurp(d / "metastability-mc.json") == t);
}

TEST_CASE("capacity and usage errors exit with code 2") {
  const auto d = scratch("errors");
  auto r = run("gap --L 50 --mode dense --out " + d.string());
  CHECK(r.code == 2);
  CHECK(r.out.find("dense bound") != std::string::npos);

  std::ofstream(d / "bad.json") << R"({"experiment": "nonsense"})";
  r = run("run --config " + (d / "bad.json").string());
  CHECK(r.code == 2);
  CHECK(r.out.find("unknown experiment") != std::string::npos);

  std::ofstream(d / "typo.json") << R"({"experiment": "qsd", "lamda": [0.5]})";
  CHECK(run("run --config " + (d / "typo.json").string()).code == 2);
  CHECK(run("qsd --lambda -1 --out " + d.string()).code == 2);
  CHECK(run("tunnel --L 40 --out " + d.string()).code == 2);
  CHECK(run("nosuchcommand").code == 2);
}

TEST_CASE("scaling regression on a table") {
  const auto d = scratch("scaling");
  {
    std::ofstream f(d / "const.csv");
    f << "L,gap\n";
    for (int L : {8, 16, 32, 64, 128}) f << L << ",0.25\n";
  }
  auto r = run("scaling --input " + (d / "const.csv").string() + " --band -2.6,-2.4");
  CHECK(r.code == 1);
  CHECK(r.out.find("FAIL") != std::string::npos);
  {
    std::ofstream f(d / "law.csv");
    f << "L,gap\n";
    for (int L : {8, 16, 32, 64, 128}) f << L << "," << std::pow(L, -2.5) << "\n";
  }
  CHECK(run("scaling --input " + (d / "law.csv").string() + " --band -2.6,-2.4").code == 0);
  {
    std::ofstream f(d / "short.csv");
    f << "L,gap\n8,1\n16,2\n";
  }
  CHECK(run("scaling --input " + (d / "short.csv").string()).code == 2);
}

TEST_CASE("scaling summary in-process") {
  const std::vector<double> x{8, 16, 32, 64, 128}, flat(5, 0.3);
  const auto s = scaling_report(x, flat, -2.6, -2.4);
  CHECK_FALSE(s.passed);
  CHECK(s.slope == Catch::Approx(0).margin(1e-12));
  CHECK_FALSE(s.message.empty());
  CHECK_THROWS_AS(scaling_report({1, 2}, {1, 2}, -1, 1), usage_error);
}

TEST_CASE("config materialization") {
  const auto c = materialize({{"experiment", "qsd"}});
  CHECK(c["L"] == json::array({4, 6, 8}));
  CHECK(c.contains("ell"));
  CHECK(c.contains("co"));
  CHECK_THROWS_AS(materialize({{"experiment", "qsd"}, {"seed", "x"}}), usage_error);
  CHECK(config_hash(c) == config_hash(materialize({{"experiment", "qsd"}})));
  CHECK(config_hash(c) != config_hash(materialize({{"experiment", "qsd"}, {"seed", 99}})));
}

TEST_CASE("simulate and enumerate commands") {
  auto r = run("enumerate --L 3 --lambda 0.5");
  CHECK(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 21);
  r = run("simulate --L 5 --horizon 10 --seed 2");
  CHECK(r.code == 0);
  CHECK(r.out == run("simulate --L 5 --horizon 10 --seed 2").out);
  CHECK(run("simulate --L 5 --start middle").code == 2);
}
