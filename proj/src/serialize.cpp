#include "dptr/serialize.hpp"

#include "dptr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dptr {

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double read_number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

VectorXd vector_from_json(const json& j) {
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = read_number(j[i]);
  return v;
}

FitKind fit_kind_from(const std::string& s) {
  for (auto k : {FitKind::unrestricted, FitKind::gamma_restricted, FitKind::continuity_restricted, FitKind::linear_null})
    if (s == to_string(k)) return k;
  throw DataError("unknown fit kind '" + s + "'");
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json params_to_json(const ThresholdParams& t) {
  return json{{"beta", vector_to_json(t.beta)}, {"delta", vector_to_json(t.delta)}, {"gamma", number(t.gamma)}};
}

ThresholdParams params_from_json(const json& j) {
  return ThresholdParams{vector_from_json(j.at("beta")), vector_from_json(j.at("delta")), read_number(j.at("gamma"))};
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
  return rows;
}

MatrixXd matrix_from_json(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(r)].size()) != cols)
      throw DataError("ragged matrix in JSON");
    m.row(r) = vector_from_json(j[static_cast<std::size_t>(r)]).transpose();
  }
  return m;
}

json fit_to_json(const GmmFit& fit) {
  json j;
  j["kind"] = to_string(fit.kind);
  j["stage"] = fit.stage == Stage::first ? "first" : "second";
  j["n"] = fit.n;
  j["k"] = fit.k;
  j["criterion"] = number(fit.criterion);
  j["theta_hat"] = params_to_json(fit.theta_hat);
  j["theta_first"] = params_to_json(fit.theta_first);
  if (fit.kink) {
    j["kink"] = json{{"beta", vector_to_json(fit.kink->beta)},
                     {"delta3", number(fit.kink->delta3)},
                     {"gamma", number(fit.kink->gamma)}};
  }
  j["g_bar"] = vector_to_json(fit.g_bar_hat);
  j["W"] = matrix_to_json(fit.W);
  j["omega_hat"] = matrix_to_json(fit.omega_hat);
  j["warnings"] = fit.warnings;
  return j;
}

GmmFit fit_from_json(const json& j) {
  GmmFit fit;
  fit.kind = fit_kind_from(j.at("kind").get<std::string>());
  fit.stage = j.at("stage").get<std::string>() == "first" ? Stage::first : Stage::second;
  fit.n = j.at("n").get<int>();
  fit.k = j.at("k").get<int>();
  fit.criterion = read_number(j.at("criterion"));
  fit.theta_hat = params_from_json(j.at("theta_hat"));
  fit.theta_first = params_from_json(j.at("theta_first"));
  if (j.contains("kink")) {
    const auto& k = j.at("kink");
    fit.kink = KinkParams{vector_from_json(k.at("beta")), read_number(k.at("delta3")), read_number(k.at("gamma"))};
  }
  fit.g_bar_hat = vector_from_json(j.at("g_bar"));
  fit.W = matrix_from_json(j.at("W"));
  fit.omega_hat = matrix_from_json(j.at("omega_hat"));
  fit.warnings = j.at("warnings").get<std::vector<std::string>>();
  return fit;
}

json stat_to_json(const TestStat& s) {
  json j{{"kind", to_string(s.kind)}, {"value", number(s.value)}, {"n", s.n}};
  if (s.at_gamma) j["at_gamma"] = number(*s.at_gamma);
  return j;
}

json run_to_json(const BootstrapRun& run) {
  json j{{"scheme", to_string(run.scheme)},
         {"B", run.B},
         {"failures", run.failures},
         {"theta0_star", params_to_json(run.theta0_star)}};
  if (!run.stats.empty()) {
    std::vector<double> s = run.stats;
    std::sort(s.begin(), s.end());
    double sum = 0.0;
    for (double v : s) sum += v;
    json q;
    for (double level : {0.5, 0.9, 0.95, 0.99}) q[std::to_string(level).substr(0, 4)] = number(empirical_quantile_sorted(s, level));
    j["stats"] = json{{"count", s.size()}, {"mean", number(sum / static_cast<double>(s.size()))}, {"quantiles", q}};
  }
  return j;
}

json grid_ci_to_json(const GridBootstrapResult& r) {
  json j;
  j["ci_set"] = r.ci_set;
  j["ci_convex"] = r.ci_set.empty() ? json(nullptr) : json{number(r.ci_convex.first), number(r.ci_convex.second)};
  int evaluated = 0;
  int failures = 0;
  for (const auto& c : r.curve) {
    evaluated += c.evaluated ? 1 : 0;
    failures += c.failures;
  }
  j["points_tested"] = evaluated;
  j["replicate_failures"] = failures;
  j["warnings"] = r.warnings;
  return j;
}

json coefficient_ci_to_json(const CoefficientBootstrapResult& r, const std::vector<std::string>& names) {
  json j;
  j["T_n"] = number(r.T_n);
  j["C_hat"] = number(r.c_hat);
  j["w_n"] = number(r.w_n);
  j["theta0_star"] = params_to_json(r.theta0_star);
  j["run"] = run_to_json(r.run);
  json cis = json::array();
  for (std::size_t i = 0; i < r.cis.size(); ++i) {
    const auto& c = r.cis[i];
    cis.push_back(json{{"name", i < names.size() ? names[i] : std::to_string(i)},
                       {"estimate", number(c.estimate)},
                       {"percentile", {number(c.asym_lo), number(c.asym_hi)}},
                       {"symmetric", {number(c.sym_lo), number(c.sym_hi)}}});
  }
  j["intervals"] = cis;
  return j;
}

json test_to_json(const TestResult& r) {
  return json{{"statistic", stat_to_json(r.stat)},
              {"p_value", number(r.p_value)},
              {"critical_value", number(r.crit)},
              {"reject", r.reject},
              {"run", run_to_json(r.run)}};
}

json to_json(const DgpConfig& c) {
  return json{{"n", c.n},
              {"T", c.T},
              {"beta2", c.beta2},
              {"beta3", c.beta3},
              {"delta1", c.delta1},
              {"delta2", c.delta2},
              {"delta3", c.delta3},
              {"gamma", c.gamma},
              {"sigma", c.sigma},
              {"rho", c.rho},
              {"rho_eu", c.rho_eu},
              {"burn_in", c.burn_in},
              {"fixed_effect_sd", c.fixed_effect_sd},
              {"jump", c.jump()},
              {"initialization", "q0 ~ stationary N(0, 1/(1-rho^2)), y0 = 0, burn-in discarded"}};
}

DgpConfig dgp_from_json(const json& j, DgpConfig c) {
  maybe(j, "n", c.n);
  maybe(j, "T", c.T);
  maybe(j, "beta2", c.beta2);
  maybe(j, "beta3", c.beta3);
  maybe(j, "delta1", c.delta1);
  maybe(j, "delta2", c.delta2);
  maybe(j, "delta3", c.delta3);
  maybe(j, "gamma", c.gamma);
  maybe(j, "sigma", c.sigma);
  maybe(j, "rho", c.rho);
  maybe(j, "rho_eu", c.rho_eu);
  maybe(j, "burn_in", c.burn_in);
  maybe(j, "fixed_effect_sd", c.fixed_effect_sd);
  if (j.contains("jump")) {
    const double jump = j.at("jump").get<double>();
    if (!j.contains("delta1")) {
      c.set_jump(jump);
    } else if (std::abs(c.jump() - jump) > 1e-12 * std::max(1.0, std::abs(jump))) {
      throw SpecError("delta1 and jump are inconsistent");
    }
  }
  return c;
}

json to_json(const BootstrapConfig& c) {
  return json{{"B", c.B},
              {"seed", c.seed},
              {"tau", c.tau},
              {"c_hat_level", c.c_hat_level},
              {"B_C", c.c_hat_replicates()},
              {"workers", c.workers},
              {"max_failure_rate", c.max_failure_rate},
              {"linearity_beta", c.linearity_beta == LinearityBeta::null_imposed ? "null_imposed" : "unrestricted"}};
}

BootstrapConfig bootstrap_from_json(const json& j, BootstrapConfig c) {
  maybe(j, "B", c.B);
  maybe(j, "seed", c.seed);
  maybe(j, "tau", c.tau);
  maybe(j, "c_hat_level", c.c_hat_level);
  maybe(j, "B_C", c.B_C);
  maybe(j, "workers", c.workers);
  maybe(j, "max_failure_rate", c.max_failure_rate);
  if (j.contains("linearity_beta")) {
    const auto s = j.at("linearity_beta").get<std::string>();
    if (s == "null_imposed") c.linearity_beta = LinearityBeta::null_imposed;
    else if (s == "unrestricted") c.linearity_beta = LinearityBeta::unrestricted;
    else throw SpecError("linearity_beta must be null_imposed or unrestricted");
  }
  return c;
}

json to_json(const InstrumentSpec& s) {
  json rules = json::array();
  for (const auto& r : s.rules) {
    rules.push_back(json{{"variable", r.variable}, {"first", r.first}, {"last", r.last ? json(*r.last) : json("all")}});
  }
  return json{{"t0", s.t0}, {"rules", rules}};
}

InstrumentSpec instruments_from_json(const json& j) {
  InstrumentSpec s;
  maybe(j, "t0", s.t0);
  if (j.contains("rules")) {
    s.rules.clear();
    for (const auto& r : j.at("rules")) {
      LagRule rule;
      rule.variable = r.at("variable").get<std::string>();
      maybe(r, "first", rule.first);
      if (r.contains("last") && !(r.at("last").is_string() && r.at("last").get<std::string>() == "all"))
        rule.last = r.at("last").get<int>();
      s.rules.push_back(std::move(rule));
    }
  } else {
    s = InstrumentSpec::standard(s.t0);
  }
  return s;
}

json to_json(const McConfig& c) {
  const auto& t = c.targets;
  return json{{"dgp", to_json(c.dgp)},
              {"reps", c.reps},
              {"seed", c.seed},
              {"workers", c.workers},
              {"bootstrap", to_json(c.bootstrap)},
              {"grid", {{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"count", c.grid.count}}},
              {"instruments", to_json(c.iv)},
              {"targets",
               {{"grid_coverage", t.grid_coverage},
                {"threshold_np", t.threshold_np},
                {"power_offsets", t.power_offsets},
                {"coefficients", t.coefficients},
                {"continuity_test", t.continuity_test},
                {"linearity_test", t.linearity_test},
                {"distance_null", t.distance_null},
                {"full_grid_ci", t.full_grid_ci}}}};
}

McConfig mc_from_json(const json& j, McConfig c) {
  if (j.contains("dgp")) c.dgp = dgp_from_json(j.at("dgp"), c.dgp);
  maybe(j, "reps", c.reps);
  maybe(j, "seed", c.seed);
  maybe(j, "workers", c.workers);
  if (j.contains("bootstrap")) c.bootstrap = bootstrap_from_json(j.at("bootstrap"), c.bootstrap);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    maybe(g, "lo", c.grid.lo);
    maybe(g, "hi", c.grid.hi);
    maybe(g, "count", c.grid.count);
  }
  if (j.contains("instruments")) c.iv = instruments_from_json(j.at("instruments"));
  if (j.contains("targets")) {
    const auto& t = j.at("targets");
    maybe(t, "grid_coverage", c.targets.grid_coverage);
    maybe(t, "threshold_np", c.targets.threshold_np);
    maybe(t, "power_offsets", c.targets.power_offsets);
    maybe(t, "coefficients", c.targets.coefficients);
    maybe(t, "continuity_test", c.targets.continuity_test);
    maybe(t, "linearity_test", c.targets.linearity_test);
    maybe(t, "distance_null", c.targets.distance_null);
    maybe(t, "full_grid_ci", c.targets.full_grid_ci);
  }
  return c;
}

std::vector<std::string> parameter_names(const std::vector<std::string>& x_names) {
  std::vector<std::string> out;
  for (const auto& x : x_names) out.push_back("beta_" + x);
  out.emplace_back("delta_const");
  for (const auto& x : x_names) out.push_back("delta_" + x);
  out.emplace_back("gamma");
  return out;
}

json to_json(const RunManifest& m) {
  return json{{"command", m.command},
              {"version", m.version},
              {"seed", m.seed},
              {"config", m.config},
              {"wall_seconds", m.wall_seconds},
              {"outputs", m.outputs},
              {"warnings", m.warnings}};
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace dptr
