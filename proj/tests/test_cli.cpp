#include "helpers.hpp"

#include "dptr/serialize.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace dptr;
using namespace dptr::testing;
namespace fs = std::filesystem;

namespace {

fs::path work_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("dptr_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

/// Runs the CLI in `dir` and returns its exit code; output goes to dir/log.txt.
int run(const fs::path& dir, const std::string& args, const std::string& env = "") {
  const std::string cmd = "cd '" + dir.string() + "' && " + env + (env.empty() ? "" : " ") + DPTR_CLI_PATH + " " +
                          args + " >> log.txt 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int count_manifests(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().filename() == "manifest.json") ++n;
  return n;
}

const char* kGrid21 = "--grid quantile:0.1:0.9:21";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("noise-free data: the estimate recovers gamma0") {
  const fs::path d = work_dir("exact");
  REQUIRE(run(d, "simulate --n 200 --sigma 0 --seed 4 --out sim") == 0);
  REQUIRE(run(d, "estimate sim/panel.csv --threshold q --grid points:-0.5,0,0.25,0.5,0.75 --out est") == 0);
  const json fit = read_json(d / "est/fit.json");
  CHECK(fit.at("theta_hat").at("gamma").get<double>() == 0.25);
  CHECK(fit.at("criterion").get<double>() <= 1e-20);
  CHECK(fs::exists(d / "est/profile.csv"));
  CHECK(slurp(d / "est/profile.csv").rfind("gamma,Qtilde\n", 0) == 0);
  CHECK(count_manifests(d / "est") == 1);
}

TEST_CASE("usage errors exit with code 2") {
  const fs::path d = work_dir("usage");
  REQUIRE(run(d, "simulate --n 50 --out sim") == 0);
  CHECK(run(d, "estimate sim/panel.csv --out est") == 2);
  CHECK(run(d, "estimate missing.csv --threshold q") == 2);
  CHECK(run(d, "estimate sim/panel.csv --threshold q --grid bogus") == 2);
  CHECK(run(d, "ci-grid sim/panel.csv --threshold q --tau 1.5") == 2);
  CHECK(run(d, "frobnicate") == 2);
  CHECK(run(d, "estimate sim/panel.csv --threshold q --iv-y-lags 9:all") == 2);
}

TEST_CASE("runtime failures exit with code 1") {
  const fs::path d = work_dir("runtime");
  std::ofstream(d / "bad.csv") << "unit,time,y,q\n1,1,1,0\n1,2,2,0\n2,1,1,0\n";
  CHECK(run(d, "estimate bad.csv --threshold q") == 1);
  std::ofstream(d / "nocol.csv") << "unit,time,y,z\n1,1,1,0\n";
  CHECK(run(d, "estimate nocol.csv --threshold q") == 1);
}

TEST_CASE("fit JSON round-trips on the seed-1 file") {
  const fs::path d = work_dir("roundtrip");
  REQUIRE(run(d, "simulate --seed 1 --out sim") == 0);
  REQUIRE(run(d, "estimate sim/panel.csv --threshold q --out est") == 0);
  const std::string text = slurp(d / "est/fit.json");
  const json j = json::parse(text);
  const GmmFit back = fit_from_json(j);
  CHECK(fit_to_json(back).dump(2) + "\n" == text);

  const PanelDataset p = load_panel_file((d / "sim/panel.csv").string(), PanelSchema{"unit", "time", "y", "q"});
  CHECK(p.y == seed1_panel().y);
  const MomentSystem sys = standard_system(p);
  const GmmFit lib = fit_unrestricted(sys, default_grid(sys));
  CHECK(back.theta_hat.stacked() == lib.theta_hat.stacked());
  CHECK(back.W == lib.W);
}

TEST_CASE("grid confidence set") {
  const fs::path d = work_dir("cigrid");
  REQUIRE(run(d, "simulate --n 200 --seed 2 --out sim") == 0);
  REQUIRE(run(d, std::string("ci-grid sim/panel.csv --threshold q --B 29 --out ci ") + kGrid21) == 0);
  const json ci = read_json(d / "ci/ci_grid.json");
  CHECK(ci.at("tau").get<double>() == 0.05);
  const double g = ci.at("gamma_hat").get<double>();
  const auto set = ci.at("ci_set").get<std::vector<double>>();
  CHECK(std::find(set.begin(), set.end(), g) != set.end());
  const std::string curve = slurp(d / "ci/ci_grid_curve.csv");
  CHECK(curve.rfind("gamma,D_n,crit\n", 0) == 0);
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 22);
  const json man = read_json(d / "ci/manifest.json");
  CHECK(man.at("config").at("tau").get<double>() == 0.05);
  CHECK(count_manifests(d / "ci") == 1);
}

TEST_CASE("coefficient intervals and tests write their results") {
  const fs::path d = work_dir("others");
  REQUIRE(run(d, "simulate --n 200 --seed 3 --out sim") == 0);
  const std::string common = std::string(" sim/panel.csv --threshold q --B 19 ") + kGrid21;
  REQUIRE(run(d, "ci-resid" + common + " --out rb") == 0);
  REQUIRE(run(d, "ci-resid" + common + " --method nonparametric --out np") == 0);
  REQUIRE(run(d, "test-continuity" + common + " --limit-draws 2000 --out tc") == 0);
  REQUIRE(run(d, "test-linearity" + common + " --out tl") == 0);
  const json rb = read_json(d / "rb/ci_resid.json");
  CHECK(rb.at("intervals").size() == 6);
  CHECK(rb.at("w_n").get<double>() >= 0.0);
  CHECK(read_json(d / "np/ci_resid.json").at("w_n").get<double>() == 1.0);
  const json tc = read_json(d / "tc/test_continuity.json");
  CHECK(tc.at("p_value").get<double>() >= 0.0);
  CHECK(tc.at("p_value").get<double>() <= 1.0);
  const json tl = read_json(d / "tl/test_linearity.json");
  CHECK(tl.at("statistic").at("kind") == "supwald");
  for (const char* sub : {"rb", "np", "tc", "tl"}) CHECK(count_manifests(d / sub) == 1);
}

TEST_CASE("simulate is deterministic and honours DPTR_SEED") {
  const fs::path d = work_dir("simdet");
  REQUIRE(run(d, "simulate --n 100 --seed 7 --out a") == 0);
  REQUIRE(run(d, "simulate --n 100 --seed 7 --out b") == 0);
  REQUIRE(run(d, "simulate --n 100 --out c", "DPTR_SEED=7") == 0);
  REQUIRE(run(d, "simulate --n 100 --seed 8 --out e") == 0);
  CHECK(slurp(d / "a/panel.csv") == slurp(d / "b/panel.csv"));
  CHECK(slurp(d / "a/panel.csv") == slurp(d / "c/panel.csv"));
  CHECK(slurp(d / "a/panel.csv") != slurp(d / "e/panel.csv"));
}

TEST_CASE("simulated threshold column has the AR(1) variance") {
  const fs::path d = work_dir("simvar");
  REQUIRE(run(d, "simulate --n 1600 --seed 11 --out sim") == 0);
  const PanelDataset p = load_panel_file((d / "sim/panel.csv").string(), PanelSchema{"unit", "time", "y", "q"});
  const double mean = p.q().mean();
  const double var = (p.q().array() - mean).square().sum() / static_cast<double>(p.q().size() - 1);
  CHECK(std::abs(var - 1.0 / 0.51) <= 0.08);
}

TEST_CASE("noise-free constant file") {
  const fs::path d = work_dir("simconst");
  REQUIRE(run(d, "simulate --n 20 --sigma 0 --beta2 0 --beta3 0 --delta1 0 --delta3 0 --out sim") == 0);
  const PanelDataset p = load_panel_file((d / "sim/panel.csv").string(), PanelSchema{"unit", "time", "y", "q"});
  CHECK(p.y.isZero(0.0));
}

TEST_CASE("config file supplies defaults that flags override") {
  const fs::path d = work_dir("config");
  REQUIRE(run(d, "simulate --n 150 --seed 5 --out sim") == 0);
  std::ofstream(d / "opts.toml") << "threshold = \"q\"\nB = 7\ngrid = \"quantile:0.1:0.9:11\"\n";
  REQUIRE(run(d, "ci-grid sim/panel.csv --config opts.toml --out a") == 0);
  REQUIRE(run(d, "ci-grid sim/panel.csv --config opts.toml --B 9 --out b") == 0);
  CHECK(read_json(d / "a/manifest.json").at("config").at("B") == 7);
  CHECK(read_json(d / "b/manifest.json").at("config").at("B") == 9);
}

TEST_CASE("Monte Carlo tables are reproducible for any worker count") {
  const fs::path d = work_dir("mc");
  std::ofstream(d / "mc.json") << R"({"dgp": {"n": 150, "jump": 1.0}, "reps": 4, "seed": 3,
    "bootstrap": {"B": 9}, "grid": {"count": 11},
    "targets": {"power_offsets": [0.25], "coefficients": true, "continuity_test": true}})";
  REQUIRE(run(d, "mc mc.json --workers 1 --out w1") == 0);
  REQUIRE(run(d, "mc mc.json --workers 8 --out w8") == 0);
  REQUIRE(run(d, "mc mc.json --workers 1 --out again") == 0);
  int compared = 0;
  for (const auto& e : fs::directory_iterator(d / "w1")) {
    const auto name = e.path().filename();
    if (name == "manifest.json") continue;
    CAPTURE(name.string());
    CHECK(slurp(d / "w1" / name) == slurp(d / "w8" / name));
    CHECK(slurp(d / "w1" / name) == slurp(d / "again" / name));
    ++compared;
  }
  CHECK(compared >= 4);
  CHECK(count_manifests(d / "w1") == 1);
}

TEST_CASE("continuity test rarely rejects on nearly noise-free continuous data") {
  const fs::path d = work_dir("contsmoke");
  int above = 0;
  const int seeds = 50;
  for (int s = 1; s <= seeds; ++s) {
    const std::string dir = "s" + std::to_string(s);
    REQUIRE(run(d, "simulate --n 200 --jump 0 --sigma 0.1 --seed " + std::to_string(s) + " --out " + dir) == 0);
    REQUIRE(run(d, "test-continuity " + dir + "/panel.csv --threshold q --B 99 --seed " + std::to_string(s) + " " +
                       kGrid21 + " --out " + dir) == 0);
    if (read_json(d / dir / "test_continuity.json").at("p_value").get<double>() > 0.05) ++above;
  }
  MESSAGE("p-value above 0.05 for " << above << " / " << seeds << " seeds");
  CHECK(above >= 45);
}

}  // TEST_SUITE
