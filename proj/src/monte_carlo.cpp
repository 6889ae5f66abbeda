#include "dptr/monte_carlo.hpp"

#include "dptr/errors.hpp"
#include "dptr/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace dptr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double indicator(bool b) { return b ? 1.0 : 0.0; }

}  // namespace

const char* to_string(CoefMethod m) {
  switch (m) {
    case CoefMethod::rb: return "R-B";
    case CoefMethod::rbs: return "R-B(S)";
    case CoefMethod::npb: return "NP-B";
    case CoefMethod::npbs: return "NP-B(S)";
  }
  return "unknown";
}

void McConfig::validate() const {
  if (reps < 1) throw SpecError("reps must be at least 1");
  if (workers < 1) throw SpecError("workers must be positive");
  if (!(grid.lo > 0.0 && grid.lo < grid.hi && grid.hi < 1.0)) throw SpecError("grid quantiles must satisfy 0 < lo < hi < 1");
  if (grid.count < 1) throw SpecError("grid count must be positive");
  dgp.validate();
  bootstrap.validate();
}

double McResult::rate(const std::function<double(const McRecord&)>& field) const {
  double sum = 0.0;
  int m = 0;
  for (const auto& r : records) {
    if (r.failed) continue;
    const double v = field(r);
    if (std::isnan(v)) continue;
    sum += v;
    ++m;
  }
  return m > 0 ? sum / m : kNaN;
}

double estimate_mc_seconds(const McConfig& cfg) {
  const auto& t = cfg.targets;
  // One unrestricted two-stage profile of a replicate world, measured at n = 400
  // with 21 grid points and 24 instruments.
  const double unit = 0.8e-3 * (cfg.dgp.n / 400.0) * ((cfg.grid.count + 4) / 25.0);
  const double B = cfg.bootstrap.B;
  double fits = 0.0;
  if (t.grid_coverage) fits += B;
  fits += B * static_cast<double>(t.power_offsets.size());
  if (t.threshold_np || t.coefficients) fits += B;
  if (t.coefficients) fits += B + cfg.bootstrap.c_hat_replicates();
  else if (t.continuity_test) fits += B;
  if (t.linearity_test) fits += 9.0 * B;
  if (t.full_grid_ci) fits += B * (cfg.grid.count + 4);
  return (fits + 2.0) * unit * cfg.reps / cfg.workers;
}

namespace {

McRecord run_replicate(const McConfig& cfg, const McHooks& hooks, int rep) {
  McRecord r;
  r.rep = rep;
  r.seed = derive_seed(cfg.seed, StreamKind::mc, static_cast<std::uint64_t>(rep));
  r.gamma_hat = r.D_n0 = r.grid_cover = r.grid_cover_raw_full = r.grid_cover_convex_full = kNaN;
  r.grid_length_convex = r.np_cover = r.nps_cover = r.w_n = kNaN;
  r.continuity_T = r.continuity_p = r.continuity_reject = kNaN;
  r.supwald = r.linearity_p = r.linearity_reject = kNaN;
  const auto& tg = cfg.targets;
  const std::size_t n_off = tg.power_offsets.size();
  r.grid_reject.assign(n_off, kNaN);
  r.np_reject.assign(n_off, kNaN);
  r.nps_reject.assign(n_off, kNaN);

  try {
    const PanelDataset panel = simulate_panel(cfg.dgp, r.seed);
    const MomentSystem sys = MomentSystem::build(panel, cfg.iv);
    const int n = sys.n();
    const double gamma0 = cfg.dgp.gamma;
    const ThresholdParams theta0 = cfg.dgp.theta();
    const VectorXd truth = theta0.stacked();

    BootstrapConfig bc = cfg.bootstrap;
    bc.seed = r.seed;
    bc.workers = 1;

    GammaGrid grid = GammaGrid::quantile(sys.threshold_sample(), cfg.grid.lo, cfg.grid.hi, cfg.grid.count);
    const bool need_gamma0 = tg.grid_coverage || tg.distance_null;
    if (need_gamma0 || n_off > 0) {
      std::vector<double> extra;
      if (need_gamma0) extra.push_back(gamma0);
      if (tg.grid_coverage)
        for (double c : tg.power_offsets) extra.push_back(gamma0 + c);
      grid = grid.with_points(extra);
    }

    const GmmFit fit = fit_unrestricted(sys, grid, bc.gmm);
    r.gamma_hat = fit.theta_hat.gamma;

    auto grid_reject = [&](double gamma) {
      if (hooks.grid_accept) return !hooks.grid_accept(sys, fit, grid, gamma);
      const auto l = static_cast<std::size_t>(grid.index_of(gamma));
      const double D = clamp_statistic(n * (fit.profile[l].criterion - fit.criterion));
      const BootstrapRun run = grid_point_bootstrap(sys, fit, grid, l, bc);
      return D > run.quantile(1.0 - bc.tau);
    };

    if (need_gamma0) {
      const auto l0 = static_cast<std::size_t>(grid.index_of(gamma0));
      r.D_n0 = clamp_statistic(n * (fit.profile[l0].criterion - fit.criterion));
    }
    if (tg.grid_coverage) {
      r.grid_cover = indicator(!grid_reject(gamma0));
      for (std::size_t j = 0; j < n_off; ++j) r.grid_reject[j] = indicator(grid_reject(gamma0 + tg.power_offsets[j]));
    }
    if (tg.full_grid_ci) {
      const GridBootstrapResult ci = grid_bootstrap_ci(sys, fit, grid, bc);
      r.grid_cover_raw_full = indicator(ci.contains(gamma0));
      r.grid_cover_convex_full = indicator(ci.convex_contains(gamma0));
      r.grid_length_convex = ci.ci_set.empty() ? 0.0 : ci.ci_convex.second - ci.ci_convex.first;
    }

    std::optional<CoefficientBootstrapResult> np;
    if (tg.threshold_np || tg.coefficients) np = nonparametric_bootstrap_ci(sys, fit, grid, bc);
    if (tg.threshold_np) {
      const ComponentCI& g = np->cis.back();
      r.np_cover = indicator(gamma0 >= g.asym_lo && gamma0 <= g.asym_hi);
      r.nps_cover = indicator(gamma0 >= g.sym_lo && gamma0 <= g.sym_hi);
      for (std::size_t j = 0; j < n_off; ++j) {
        const double gc = gamma0 + tg.power_offsets[j];
        r.np_reject[j] = indicator(gc < g.asym_lo || gc > g.asym_hi);
        r.nps_reject[j] = indicator(gc < g.sym_lo || gc > g.sym_hi);
      }
    }

    std::optional<GmmFit> kink;
    std::optional<BootstrapRun> cont_run;
    if (tg.continuity_test || tg.coefficients) {
      kink = fit_continuity_restricted(sys, grid, bc.gmm, fit.W);
      r.continuity_T = continuity_stat(fit, *kink).value;
    }
    if (tg.continuity_test) {
      cont_run = continuity_bootstrap(sys, fit, *kink, grid, bc, bc.B);
      r.continuity_p = cont_run->p_value(r.continuity_T);
      r.continuity_reject = indicator(r.continuity_T > cont_run->quantile(1.0 - bc.tau));
    }
    if (tg.coefficients) {
      double c_hat;
      if (cont_run && bc.c_hat_replicates() == bc.B) {
        c_hat = c_hat_from_run(*cont_run, bc.c_hat_level);
      } else {
        c_hat = compute_c_hat(sys, fit, *kink, grid, bc);
      }
      const CoefficientBootstrapResult rb = residual_bootstrap_ci(sys, fit, *kink, grid, bc, c_hat);
      r.w_n = rb.w_n;
      const auto n_coef = static_cast<std::size_t>(truth.size() - 1);
      r.coef_cover.assign(kCoefMethods, std::vector<double>(n_coef, kNaN));
      r.coef_length.assign(kCoefMethods, std::vector<double>(n_coef, kNaN));
      for (std::size_t j = 0; j < n_coef; ++j) {
        const double v = truth(static_cast<Eigen::Index>(j));
        const auto fill = [&](CoefMethod m, double lo, double hi) {
          r.coef_cover[static_cast<int>(m)][j] = indicator(v >= lo && v <= hi);
          r.coef_length[static_cast<int>(m)][j] = hi - lo;
        };
        fill(CoefMethod::rb, rb.cis[j].asym_lo, rb.cis[j].asym_hi);
        fill(CoefMethod::rbs, rb.cis[j].sym_lo, rb.cis[j].sym_hi);
        fill(CoefMethod::npb, np->cis[j].asym_lo, np->cis[j].asym_hi);
        fill(CoefMethod::npbs, np->cis[j].sym_lo, np->cis[j].sym_hi);
      }
    }
    if (tg.linearity_test) {
      const GmmFit lin = fit_linear_null(sys, bc.gmm);
      const TestResult lt = linearity_bootstrap_test(sys, fit, lin, grid, bc);
      r.supwald = lt.stat.value;
      r.linearity_p = lt.p_value;
      r.linearity_reject = indicator(lt.reject);
    }
  } catch (const Error& e) {
    r.failed = true;
    r.error = e.what();
    std::replace(r.error.begin(), r.error.end(), '"', '\'');
  }
  return r;
}

}  // namespace

McResult run_mc(const McConfig& cfg, const McHooks& hooks, std::ostream* log) {
  cfg.validate();
  if (log) {
    *log << "monte carlo: " << cfg.reps << " replicates, n = " << cfg.dgp.n << ", jump = " << cfg.dgp.jump()
         << ", B = " << cfg.bootstrap.B << ", workers = " << cfg.workers << "; estimated runtime "
         << std::llround(estimate_mc_seconds(cfg)) << " s\n";
  }
  const auto start = std::chrono::steady_clock::now();
  McResult res;
  res.config = cfg;
  res.records.resize(static_cast<std::size_t>(cfg.reps));
  parallel_for(res.records.size(), cfg.workers,
               [&](std::size_t i) { res.records[i] = run_replicate(cfg, hooks, static_cast<int>(i)); });
  for (const auto& r : res.records) res.failures += r.failed ? 1 : 0;
  res.coef_names = {"beta2", "beta3", "delta1", "delta2", "delta3"};
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (log && res.failures > 0) *log << "monte carlo: " << res.failures << " replicates failed and were excluded\n";
  return res;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v, int digits = 6) {
  if (std::isnan(v)) return "NA";
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

std::ofstream open_table(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

double mean_of(const McResult& res, const std::function<double(const McRecord&)>& f) { return res.rate(f); }

}  // namespace

std::vector<std::string> write_mc_tables(const McResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& cfg = res.config;
  const auto& tg = cfg.targets;
  const std::string design = std::to_string(cfg.dgp.n) + "," + fmt(cfg.dgp.jump());
  std::vector<std::string> files;

  if (tg.grid_coverage || tg.threshold_np || tg.full_grid_ci) {
    auto out = open_table(dir / "table1_threshold_coverage.csv");
    out << "method,n,jump,coverage,used,failures\n";
    auto row = [&](const char* m, const std::function<double(const McRecord&)>& f) {
      out << m << ',' << design << ',' << fmt(res.rate(f)) << ',' << res.used() << ',' << res.failures << '\n';
    };
    if (tg.grid_coverage) row("Grid-B", [](const McRecord& r) { return r.grid_cover; });
    if (tg.full_grid_ci) {
      row("Grid-B(raw set)", [](const McRecord& r) { return r.grid_cover_raw_full; });
      row("Grid-B(convex)", [](const McRecord& r) { return r.grid_cover_convex_full; });
    }
    if (tg.threshold_np) {
      row("NP-B", [](const McRecord& r) { return r.np_cover; });
      row("NP-B(S)", [](const McRecord& r) { return r.nps_cover; });
    }
    files.push_back("table1_threshold_coverage.csv");
  }

  if (!tg.power_offsets.empty() && (tg.grid_coverage || tg.threshold_np)) {
    auto out = open_table(dir / "table2_power.csv");
    out << "c,n,jump,method,rejection\n";
    for (std::size_t j = 0; j < tg.power_offsets.size(); ++j) {
      const std::string c = fmt(tg.power_offsets[j]);
      if (tg.grid_coverage)
        out << c << ',' << design << ",Grid-B," << fmt(res.rate([j](const McRecord& r) { return r.grid_reject[j]; }))
            << '\n';
      if (tg.threshold_np) {
        out << c << ',' << design << ",NP-B," << fmt(res.rate([j](const McRecord& r) { return r.np_reject[j]; }))
            << '\n';
        out << c << ',' << design << ",NP-B(S)," << fmt(res.rate([j](const McRecord& r) { return r.nps_reject[j]; }))
            << '\n';
      }
    }
    files.push_back("table2_power.csv");
  }

  if (tg.coefficients) {
    auto header = [&](std::ostream& out, const char* first) {
      out << first << ",n,jump";
      for (const auto& c : res.coef_names) out << ',' << c;
      out << '\n';
    };
    auto cover = open_table(dir / "table3_coef_coverage.csv");
    header(cover, "method");
    for (int m = 0; m < kCoefMethods; ++m) {
      cover << to_string(static_cast<CoefMethod>(m)) << ',' << design;
      for (std::size_t j = 0; j < res.coef_names.size(); ++j)
        cover << ',' << fmt(res.rate([m, j](const McRecord& r) { return r.coef_cover[m][j]; }));
      cover << '\n';
    }
    files.push_back("table3_coef_coverage.csv");

    auto ratio = open_table(dir / "table4_length_ratio.csv");
    header(ratio, "ratio");
    const std::pair<CoefMethod, CoefMethod> pairs[] = {{CoefMethod::rb, CoefMethod::npb},
                                                       {CoefMethod::rbs, CoefMethod::npbs}};
    for (const auto& [a, b] : pairs) {
      ratio << to_string(a) << " / " << to_string(b) << ',' << design;
      for (std::size_t j = 0; j < res.coef_names.size(); ++j) {
        const int ia = static_cast<int>(a);
        const int ib = static_cast<int>(b);
        const double la = mean_of(res, [ia, j](const McRecord& r) { return r.coef_length[ia][j]; });
        const double lb = mean_of(res, [ib, j](const McRecord& r) { return r.coef_length[ib][j]; });
        ratio << ',' << fmt(la / lb);
      }
      ratio << '\n';
    }
    files.push_back("table4_length_ratio.csv");
  }

  if (tg.continuity_test || tg.linearity_test || tg.distance_null || tg.grid_coverage) {
    auto out = open_table(dir / "tests.csv");
    out << "test,n,jump,rejection,mean_stat,q95_stat,used\n";
    auto stats_of = [&](const std::function<double(const McRecord&)>& f) {
      std::vector<double> v;
      for (const auto& r : res.records)
        if (!r.failed && !std::isnan(f(r))) v.push_back(f(r));
      return v;
    };
    auto row = [&](const char* name, const std::function<double(const McRecord&)>& rej,
                   const std::function<double(const McRecord&)>& stat) {
      const auto v = stats_of(stat);
      double mean = kNaN;
      double q95 = kNaN;
      if (!v.empty()) {
        double s = 0.0;
        for (double x : v) s += x;
        mean = s / static_cast<double>(v.size());
        q95 = empirical_quantile(v, 0.95);
      }
      out << name << ',' << design << ',' << (rej ? fmt(res.rate(rej)) : "NA") << ',' << fmt(mean) << ','
          << fmt(q95) << ',' << v.size() << '\n';
    };
    if (tg.distance_null || tg.grid_coverage)
      row("distance_at_gamma0", tg.grid_coverage ? std::function<double(const McRecord&)>(
                                                       [](const McRecord& r) { return 1.0 - r.grid_cover; })
                                                 : nullptr,
          [](const McRecord& r) { return r.D_n0; });
    if (tg.continuity_test)
      row("continuity", [](const McRecord& r) { return r.continuity_reject; },
          [](const McRecord& r) { return r.continuity_T; });
    if (tg.linearity_test)
      row("linearity", [](const McRecord& r) { return r.linearity_reject; }, [](const McRecord& r) { return r.supwald; });
    files.push_back("tests.csv");
  }

  {
    auto out = open_table(dir / "replicates.csv");
    out << "rep,seed,failed,gamma_hat,D_n0,grid_cover,np_cover,nps_cover,w_n,continuity_T,continuity_p,supwald,"
           "linearity_p,error\n";
    for (const auto& r : res.records) {
      out << r.rep << ',' << r.seed << ',' << (r.failed ? 1 : 0) << ',' << fmt(r.gamma_hat, 17) << ','
          << fmt(r.D_n0, 17) << ',' << fmt(r.grid_cover) << ',' << fmt(r.np_cover) << ',' << fmt(r.nps_cover) << ','
          << fmt(r.w_n, 17) << ',' << fmt(r.continuity_T, 17) << ',' << fmt(r.continuity_p, 17) << ','
          << fmt(r.supwald, 17) << ',' << fmt(r.linearity_p, 17) << ",\"" << r.error << "\"\n";
    }
    files.push_back("replicates.csv");
  }
  return files;
}

}  // namespace dptr
