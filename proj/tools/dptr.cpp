// dptr: estimation and bootstrap inference for dynamic panel threshold models.

#include "dptr/bootstrap.hpp"
#include "dptr/dgp.hpp"
#include "dptr/errors.hpp"
#include "dptr/gmm.hpp"
#include "dptr/monte_carlo.hpp"
#include "dptr/serialize.hpp"
#include "dptr/statistics.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dptr;

namespace {

/// Invalid flag values; reported like CLI11 parse errors (exit code 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string panel;
  std::string unit = "unit";
  std::string time = "time";
  std::string y = "y";
  std::string threshold;
  int t0 = 3;
  std::string iv_y_lags = "2:all";
  std::string iv_q_lags = "1:all";
  std::string grid = "quantile:0.1:0.9:81";
  double tau = 0.05;
  int B = 200;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out = ".";
};

void add_data_options(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("panel", o.panel, "Long-format panel CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--threshold", o.threshold, "Column holding the threshold variable q")->required();
  cmd->add_option("--unit", o.unit, "Unit identifier column")->capture_default_str();
  cmd->add_option("--time", o.time, "Time column")->capture_default_str();
  cmd->add_option("--y", o.y, "Outcome column")->capture_default_str();
  cmd->add_option("--t0", o.t0, "First period entering the moments")->capture_default_str();
  cmd->add_option("--iv-y-lags", o.iv_y_lags, "Outcome lags FIRST:LAST|FIRST:all|none")->capture_default_str();
  cmd->add_option("--iv-q-lags", o.iv_q_lags, "Threshold lags FIRST:LAST|FIRST:all|none")->capture_default_str();
  cmd->add_option("--grid", o.grid, "quantile:LO:HI:COUNT or points:G1,G2,...")->capture_default_str();
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
}

void add_bootstrap_options(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--tau", o.tau, "Nominal level")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--B", o.B, "Bootstrap replications")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Master seed (falls back to DPTR_SEED, then 1)");
  cmd->add_option("--workers", o.workers, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("DPTR_SEED")) {
    std::uint64_t v = 0;
    const std::string s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw UsageError("DPTR_SEED is not an unsigned integer");
    return v;
  }
  return 1;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw UsageError("invalid number '" + s + "' in " + what);
  return v;
}

std::optional<LagRule> parse_lags(const std::string& spec, const std::string& variable) {
  if (spec == "none") return std::nullopt;
  const auto parts = split(spec, ':');
  if (parts.size() != 2) throw UsageError("lag range '" + spec + "' must be FIRST:LAST, FIRST:all or none");
  LagRule r;
  r.variable = variable;
  r.first = static_cast<int>(parse_number(parts[0], "lag range"));
  if (parts[1] != "all") r.last = static_cast<int>(parse_number(parts[1], "lag range"));
  if (r.first < 1 || (r.last && *r.last < r.first)) throw UsageError("invalid lag range '" + spec + "'");
  return r;
}

InstrumentSpec instrument_spec(const CommonOptions& o) {
  InstrumentSpec spec;
  spec.t0 = o.t0;
  if (auto r = parse_lags(o.iv_y_lags, "y")) spec.rules.push_back(*r);
  if (auto r = parse_lags(o.iv_q_lags, "q")) spec.rules.push_back(*r);
  if (spec.rules.empty()) throw UsageError("no instruments requested");
  return spec;
}

GammaGrid make_grid(const std::string& spec, const MomentSystem& sys) {
  const auto parts = split(spec, ':');
  if (parts.size() == 4 && parts[0] == "quantile") {
    const double lo = parse_number(parts[1], "--grid");
    const double hi = parse_number(parts[2], "--grid");
    const int count = static_cast<int>(parse_number(parts[3], "--grid"));
    if (!(lo > 0.0 && lo < hi && hi < 1.0) || count < 1) throw UsageError("invalid quantile grid '" + spec + "'");
    return GammaGrid::quantile(sys.threshold_sample(), lo, hi, count);
  }
  if (parts.size() == 2 && parts[0] == "points") {
    std::vector<double> pts;
    for (const auto& s : split(parts[1], ',')) pts.push_back(parse_number(s, "--grid"));
    const auto sample = sys.threshold_sample();
    return GammaGrid::explicit_points(pts, sample);
  }
  throw UsageError("--grid must be quantile:LO:HI:COUNT or points:G1,G2,...");
}

json common_config(const CommonOptions& o, std::uint64_t seed, bool bootstrap) {
  json j{{"panel", o.panel},
         {"unit", o.unit},
         {"time", o.time},
         {"y", o.y},
         {"threshold", o.threshold},
         {"t0", o.t0},
         {"iv_y_lags", o.iv_y_lags},
         {"iv_q_lags", o.iv_q_lags},
         {"grid", o.grid}};
  if (bootstrap) {
    j["tau"] = o.tau;
    j["B"] = o.B;
    j["seed"] = seed;
    j["workers"] = o.workers;
  }
  return j;
}

/// Loaded data, moment system, grid and unrestricted fit shared by the commands.
struct Session {
  PanelDataset panel;
  MomentSystem sys;
  GammaGrid grid;
  GmmFit fit;
  std::vector<std::string> names;
};

Session open_session(const CommonOptions& o) {
  Session s;
  s.panel = load_panel_file(o.panel, PanelSchema{o.unit, o.time, o.y, o.threshold});
  s.sys = MomentSystem::build(s.panel, instrument_spec(o));
  s.grid = make_grid(o.grid, s.sys);
  s.fit = fit_unrestricted(s.sys, s.grid);
  s.names = parameter_names(s.panel.x_names);
  return s;
}

BootstrapConfig bootstrap_config(const CommonOptions& o, std::uint64_t seed) {
  BootstrapConfig c;
  c.B = o.B;
  c.seed = seed;
  c.tau = o.tau;
  c.workers = o.workers;
  return c;
}

std::string fmt6(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

class Outputs {
 public:
  Outputs(std::string command, const std::string& dir) : dir_(dir), start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    fs::create_directories(dir_);
  }
  fs::path path(const std::string& name) {
    manifest_.outputs.push_back(name);
    return dir_ / name;
  }
  RunManifest& manifest() { return manifest_; }
  void finish() {
    manifest_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest_.outputs.push_back("manifest.json");
    write_json(dir_ / "manifest.json", to_json(manifest_));
  }

 private:
  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
  RunManifest manifest_;
};

std::ofstream open_csv(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

void print_params(const ThresholdParams& t, const std::vector<std::string>& names) {
  const VectorXd v = t.stacked();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    std::cout << "  " << std::left << std::setw(16) << names[static_cast<std::size_t>(i)] << fmt6(v(i)) << '\n';
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_estimate(const CommonOptions& o) {
  Outputs out("estimate", o.out);
  const Session s = open_session(o);
  write_json(out.path("fit.json"), fit_to_json(s.fit));
  {
    auto csv = open_csv(out.path("profile.csv"));
    csv << "gamma,Qtilde\n";
    for (const auto& p : s.fit.profile) {
      csv << p.gamma << ',';
      if (p.ok) csv << p.criterion;
      else csv << "NA";
      csv << '\n';
    }
  }
  out.manifest().config = common_config(o, 0, false);
  out.manifest().warnings = s.fit.warnings;
  out.finish();
  std::cout << "n = " << s.fit.n << ", k = " << s.fit.k << ", grid points = " << s.grid.size()
            << ", criterion = " << fmt6(s.fit.criterion) << '\n';
  print_params(s.fit.theta_hat, s.names);
  return 0;
}

int cmd_ci_grid(const CommonOptions& o) {
  const std::uint64_t seed = resolve_seed(o.seed);
  Outputs out("ci-grid", o.out);
  const Session s = open_session(o);
  const auto res = grid_bootstrap_ci(s.sys, s.fit, s.grid, bootstrap_config(o, seed));
  json j = grid_ci_to_json(res);
  j["gamma_hat"] = s.fit.theta_hat.gamma;
  j["tau"] = o.tau;
  write_json(out.path("ci_grid.json"), j);
  {
    auto csv = open_csv(out.path("ci_grid_curve.csv"));
    csv << "gamma,D_n,crit\n";
    for (const auto& c : res.curve) {
      csv << c.gamma << ',';
      if (std::isnan(c.D_n)) csv << "NA"; else csv << c.D_n;
      csv << ',';
      if (std::isnan(c.crit)) csv << "NA"; else csv << c.crit;
      csv << '\n';
    }
  }
  out.manifest().config = common_config(o, seed, true);
  out.manifest().seed = seed;
  out.manifest().warnings = res.warnings;
  out.finish();
  std::cout << "gamma_hat = " << fmt6(s.fit.theta_hat.gamma) << "; " << res.ci_set.size() << " of " << s.grid.size()
            << " grid points accepted at level " << fmt6(1.0 - o.tau) << '\n';
  if (!res.ci_set.empty())
    std::cout << "convex hull: [" << fmt6(res.ci_convex.first) << ", " << fmt6(res.ci_convex.second) << "]\n";
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int cmd_ci_resid(const CommonOptions& o, const std::string& method, int B_C, double c_level) {
  const std::uint64_t seed = resolve_seed(o.seed);
  Outputs out("ci-resid", o.out);
  const Session s = open_session(o);
  BootstrapConfig bc = bootstrap_config(o, seed);
  bc.B_C = B_C;
  bc.c_hat_level = c_level;
  CoefficientBootstrapResult res;
  if (method == "nonparametric") {
    res = nonparametric_bootstrap_ci(s.sys, s.fit, s.grid, bc);
  } else {
    const GmmFit kink = fit_continuity_restricted(s.sys, s.grid, bc.gmm, s.fit.W);
    res = residual_bootstrap_ci(s.sys, s.fit, kink, s.grid, bc);
  }
  json j = coefficient_ci_to_json(res, s.names);
  j["method"] = method;
  j["tau"] = o.tau;
  write_json(out.path("ci_resid.json"), j);
  json cfg = common_config(o, seed, true);
  cfg["method"] = method;
  cfg["B_C"] = bc.c_hat_replicates();
  cfg["c_hat_level"] = c_level;
  out.manifest().config = cfg;
  out.manifest().seed = seed;
  out.finish();
  if (method != "nonparametric")
    std::cout << "T_n = " << fmt6(res.T_n) << ", C_hat = " << fmt6(res.c_hat) << ", w_n = " << fmt6(res.w_n) << '\n';
  std::cout << std::left << std::setw(16) << "parameter" << std::setw(12) << "estimate" << std::setw(26)
            << "percentile" << "symmetric\n";
  for (std::size_t i = 0; i < res.cis.size(); ++i) {
    const auto& c = res.cis[i];
    std::cout << std::setw(16) << s.names[i] << std::setw(12) << fmt6(c.estimate) << std::setw(26)
              << ("[" + fmt6(c.asym_lo) + ", " + fmt6(c.asym_hi) + "]") << "[" << fmt6(c.sym_lo) << ", "
              << fmt6(c.sym_hi) << "]\n";
  }
  return 0;
}

int cmd_test_continuity(const CommonOptions& o, int limit_draws) {
  const std::uint64_t seed = resolve_seed(o.seed);
  Outputs out("test-continuity", o.out);
  const Session s = open_session(o);
  const BootstrapConfig bc = bootstrap_config(o, seed);
  const GmmFit kink = fit_continuity_restricted(s.sys, s.grid, bc.gmm, s.fit.W);
  const TestResult res = continuity_bootstrap_test(s.sys, s.fit, kink, s.grid, bc);
  json j = test_to_json(res);
  j["theta_tilde"] = params_to_json(kink.theta_hat);
  if (limit_draws > 0) {
    const auto draws = simulate_continuity_limit(continuity_plugins(s.sys, s.fit), limit_draws, seed, o.workers);
    j["limit_critical_value"] = empirical_quantile_sorted(draws, 1.0 - o.tau);
    j["limit_draws"] = limit_draws;
  }
  write_json(out.path("test_continuity.json"), j);
  json cfg = common_config(o, seed, true);
  cfg["limit_draws"] = limit_draws;
  out.manifest().config = cfg;
  out.manifest().seed = seed;
  out.finish();
  std::cout << "T_n = " << fmt6(res.stat.value) << ", bootstrap p-value = " << fmt6(res.p_value)
            << ", critical value = " << fmt6(res.crit) << (res.reject ? " (reject continuity)" : "") << '\n';
  return 0;
}

int cmd_test_linearity(const CommonOptions& o, const std::string& beta_choice) {
  const std::uint64_t seed = resolve_seed(o.seed);
  Outputs out("test-linearity", o.out);
  const Session s = open_session(o);
  BootstrapConfig bc = bootstrap_config(o, seed);
  bc.linearity_beta = beta_choice == "unrestricted" ? LinearityBeta::unrestricted : LinearityBeta::null_imposed;
  const GmmFit lin = fit_linear_null(s.sys, bc.gmm);
  const TestResult res = linearity_bootstrap_test(s.sys, s.fit, lin, s.grid, bc);
  write_json(out.path("test_linearity.json"), test_to_json(res));
  json cfg = common_config(o, seed, true);
  cfg["linearity_beta"] = beta_choice;
  out.manifest().config = cfg;
  out.manifest().seed = seed;
  out.finish();
  std::cout << "sup-Wald = " << fmt6(res.stat.value) << ", bootstrap p-value = " << fmt6(res.p_value)
            << ", critical value = " << fmt6(res.crit) << (res.reject ? " (reject linearity)" : "") << '\n';
  return 0;
}

int cmd_simulate(const DgpConfig& cfg, const std::optional<double>& jump, const std::optional<std::uint64_t>& seed_flag,
                 const std::string& dir) {
  DgpConfig c = cfg;
  if (jump) c.set_jump(*jump);
  const std::uint64_t seed = resolve_seed(seed_flag);
  Outputs out("simulate", dir);
  const PanelDataset panel = simulate_panel(c, seed);
  {
    std::ofstream f(out.path("panel.csv"), std::ios::binary);
    if (!f) throw DataError("cannot write panel.csv");
    write_panel_csv(f, panel);
  }
  out.manifest().config = json{{"dgp", to_json(c)}};
  out.manifest().seed = seed;
  out.finish();
  std::cout << "wrote " << (fs::path(dir) / "panel.csv").string() << " (n = " << c.n << ", T = " << c.T
            << ", jump = " << fmt6(c.jump()) << ")\n";
  return 0;
}

struct McOverrides {
  std::optional<int> B;
  std::optional<int> reps;
  std::optional<int> workers;
  std::optional<double> tau;
  std::optional<std::uint64_t> seed;
};

int cmd_mc(const std::string& config_file, const McOverrides& ov, const std::string& dir) {
  McConfig cfg = mc_from_json(read_json(config_file));
  if (ov.B) cfg.bootstrap.B = *ov.B;
  if (ov.reps) cfg.reps = *ov.reps;
  if (ov.workers) cfg.workers = *ov.workers;
  if (ov.tau) cfg.bootstrap.tau = *ov.tau;
  if (ov.seed) {
    cfg.seed = *ov.seed;
  } else if (!read_json(config_file).contains("seed") && std::getenv("DPTR_SEED")) {
    cfg.seed = resolve_seed(std::nullopt);
  }
  Outputs out("mc", dir);
  const McResult res = run_mc(cfg, {}, &std::cerr);
  for (const auto& f : write_mc_tables(res, dir)) out.manifest().outputs.push_back(f);
  out.manifest().config = to_json(cfg);
  out.manifest().seed = cfg.seed;
  if (res.failures > 0)
    out.manifest().warnings.push_back(std::to_string(res.failures) + " replicates failed and were excluded");
  out.finish();
  std::cout << "monte carlo: " << res.used() << " of " << cfg.reps << " replicates used; tables in " << dir << '\n';
  return 0;
}

/// Replaces `--config FILE` by the options it lists, skipping any option that is
/// also given on the command line, so flags take precedence over the file.
/// Keys may sit at the top level or in a section named after the subcommand.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::optional<std::string> file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file name");
      file = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!file) return args;
  if (!fs::exists(*file)) throw UsageError("config file '" + *file + "' does not exist");
  const std::string sub = args.size() > 1 ? args[1] : "";
  auto given = [&](const std::string& name) {
    for (std::size_t i = 2; i < args.size(); ++i)
      if (args[i] == "--" + name || args[i].rfind("--" + name + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& item : CLI::ConfigTOML().from_file(*file)) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    const bool top = item.parents.empty() || (item.parents.size() == 1 && item.parents[0] == "default");
    const bool mine = item.parents.size() == 1 && item.parents[0] == sub;
    if (!(top || mine) || given(item.name)) continue;
    for (const auto& value : item.inputs) {
      extra.push_back("--" + item.name);
      extra.push_back(value);
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimation and bootstrap inference for dynamic panel threshold models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kLibraryVersion);

  CommonOptions o;
  std::string config_file_unused;
  auto with_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_file_unused, "TOML/INI file with option defaults (flags take precedence)");
    return cmd;
  };

  auto* estimate = with_config(app.add_subcommand("estimate", "Two-stage GMM fit over a threshold grid"));
  add_data_options(estimate, o);

  auto* ci_grid = with_config(app.add_subcommand("ci-grid", "Grid-bootstrap confidence set for the threshold"));
  add_data_options(ci_grid, o);
  add_bootstrap_options(ci_grid, o);

  std::string method = "residual";
  int B_C = 0;
  double c_level = 0.5;
  auto* ci_resid = with_config(app.add_subcommand("ci-resid", "Bootstrap confidence intervals for the coefficients"));
  add_data_options(ci_resid, o);
  add_bootstrap_options(ci_resid, o);
  ci_resid->add_option("--method", method, "residual or nonparametric")
      ->capture_default_str()
      ->check(CLI::IsMember({"residual", "nonparametric"}));
  ci_resid->add_option("--B-C", B_C, "Replicates used for C_hat (default: B)");
  ci_resid->add_option("--c-hat-level", c_level, "Quantile of the continuity bootstrap used as C_hat")
      ->capture_default_str();

  int limit_draws = 0;
  auto* test_cont = with_config(app.add_subcommand("test-continuity", "Bootstrap test of a continuous (kink) model"));
  add_data_options(test_cont, o);
  add_bootstrap_options(test_cont, o);
  test_cont->add_option("--limit-draws", limit_draws, "Also simulate the limit law with this many draws");

  std::string beta_choice = "null_imposed";
  auto* test_lin = with_config(app.add_subcommand("test-linearity", "Bootstrap sup-Wald test of linearity"));
  add_data_options(test_lin, o);
  add_bootstrap_options(test_lin, o);
  test_lin->add_option("--null-beta", beta_choice, "null_imposed or unrestricted")
      ->capture_default_str()
      ->check(CLI::IsMember({"null_imposed", "unrestricted"}));

  DgpConfig dgp;
  std::optional<double> jump;
  std::optional<std::uint64_t> sim_seed;
  std::string sim_out = ".";
  auto* simulate = with_config(app.add_subcommand("simulate", "Simulate a panel from the Monte Carlo design"));
  simulate->add_option("--n", dgp.n)->capture_default_str();
  simulate->add_option("--T", dgp.T)->capture_default_str();
  simulate->add_option("--beta2", dgp.beta2)->capture_default_str();
  simulate->add_option("--beta3", dgp.beta3)->capture_default_str();
  auto* d1 = simulate->add_option("--delta1", dgp.delta1)->capture_default_str();
  simulate->add_option("--delta2", dgp.delta2)->capture_default_str();
  simulate->add_option("--delta3", dgp.delta3)->capture_default_str();
  simulate->add_option("--gamma", dgp.gamma)->capture_default_str();
  simulate->add_option("--sigma", dgp.sigma)->capture_default_str();
  simulate->add_option("--rho", dgp.rho)->capture_default_str();
  simulate->add_option("--rho-eu", dgp.rho_eu)->capture_default_str();
  simulate->add_option("--burn-in", dgp.burn_in)->capture_default_str();
  simulate->add_option("--fixed-effect-sd", dgp.fixed_effect_sd)->capture_default_str();
  simulate->add_option("--jump", jump, "Sets delta1 = jump - delta3 * gamma")->excludes(d1);
  simulate->add_option("--seed", sim_seed, "Seed (falls back to DPTR_SEED, then 1)");
  simulate->add_option("--out", sim_out, "Output directory")->capture_default_str();

  std::string mc_config;
  McOverrides ov;
  std::string mc_out = ".";
  auto* mc = app.add_subcommand("mc", "Monte Carlo experiment from a JSON configuration");
  mc->add_option("config", mc_config, "JSON experiment configuration")->required()->check(CLI::ExistingFile);
  mc->add_option("--B", ov.B, "Override bootstrap replications");
  mc->add_option("--reps", ov.reps, "Override Monte Carlo replications");
  mc->add_option("--workers", ov.workers, "Override worker threads");
  mc->add_option("--tau", ov.tau, "Override nominal level");
  mc->add_option("--seed", ov.seed, "Override master seed");
  mc->add_option("--out", mc_out, "Output directory")->capture_default_str();

  std::vector<std::string> args;
  try {
    args = expand_config(std::vector<std::string>(argv, argv + argc));
  } catch (const std::exception& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  }
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*estimate) return cmd_estimate(o);
    if (*ci_grid) return cmd_ci_grid(o);
    if (*ci_resid) return cmd_ci_resid(o, method, B_C, c_level);
    if (*test_cont) return cmd_test_continuity(o, limit_draws);
    if (*test_lin) return cmd_test_linearity(o, beta_choice);
    if (*simulate) return cmd_simulate(dgp, jump, sim_seed, sim_out);
    if (*mc) return cmd_mc(mc_config, ov, mc_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const SpecError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
