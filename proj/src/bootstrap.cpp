#include "dptr/bootstrap.hpp"

#include "dptr/errors.hpp"
#include "dptr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dptr {

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::grid: return "grid";
    case Scheme::residual: return "residual";
    case Scheme::continuity: return "continuity";
    case Scheme::linearity: return "linearity";
    case Scheme::nonparametric: return "nonparametric";
  }
  return "unknown";
}

StreamKind stream_kind(Scheme s) {
  switch (s) {
    case Scheme::grid: return StreamKind::grid;
    case Scheme::residual: return StreamKind::residual;
    case Scheme::continuity: return StreamKind::continuity;
    case Scheme::linearity: return StreamKind::linearity;
    case Scheme::nonparametric: return StreamKind::nonparametric;
  }
  return StreamKind::grid;
}

void BootstrapConfig::validate() const {
  if (B < 1) throw SpecError("B must be positive");
  if (B_C < 0) throw SpecError("B_C must be non-negative");
  if (!(tau > 0.0 && tau < 1.0)) throw SpecError("tau must be in (0, 1)");
  if (!(c_hat_level > 0.0 && c_hat_level < 1.0)) throw SpecError("C_hat level must be in (0, 1)");
  if (workers < 1) throw SpecError("workers must be positive");
  if (!(max_failure_rate >= 0.0 && max_failure_rate < 1.0)) throw SpecError("max failure rate must be in [0, 1)");
}

// ---------------------------------------------------------------------------
// Worlds
// ---------------------------------------------------------------------------

WorldGenerator::WorldGenerator(const MomentSystem& sys, const GmmFit& fit, ThresholdParams theta0_star)
    : sys_(&sys), fit_(&fit), theta0_(std::move(theta0_star)) {
  if (theta0_.beta.size() != sys.p() || theta0_.delta.size() != sys.p() + 1)
    throw DimensionError("theta0* has the wrong dimension");
  if (fit.residuals.rows() != sys.n() || fit.residuals.cols() != sys.periods())
    throw DimensionError("fit residuals do not match the moment system");
  const VectorXd a0 = theta0_.alpha();
  const VectorXd a_hat = fit.theta_hat.alpha();
  dy_star_.reserve(sys.blocks().size());
  for (int b = 0; b < sys.periods(); ++b) {
    const VectorXd shift = sys.regressors(b, theta0_.gamma) * a0 - sys.regressors(b, fit.theta_hat.gamma) * a_hat;
    dy_star_.push_back(sys.blocks()[b].dy + shift);
  }
}

BootstrapWorld WorldGenerator::make(std::vector<int> index) const {
  if (static_cast<int>(index.size()) != sys_->n()) throw DimensionError("resampling index must have n entries");
  BootstrapWorld w;
  w.system = sys_->resample(index);
  auto& blocks = w.system.mutable_blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) blocks[b].dy = dy_star_[b](index);
  w.system.set_recenter(fit_->g_bar_hat);
  w.residuals_star = fit_->residuals(index, Eigen::all);
  w.theta0_star = theta0_;
  w.index = std::move(index);
  return w;
}

BootstrapWorld WorldGenerator::make(const StreamKey& key) const { return make(draw_index(sys_->n(), key)); }

VectorXd WorldGenerator::resampling_expectation() const {
  // The n single-unit draws have equal probability, so the expectation is the
  // sample mean of the per-unit moments in the identity world.
  std::vector<int> identity(static_cast<std::size_t>(sys_->n()));
  for (int i = 0; i < sys_->n(); ++i) identity[static_cast<std::size_t>(i)] = i;
  const BootstrapWorld w = make(std::move(identity));
  return bootstrap_moment(w, theta0_);
}

std::vector<int> draw_index(int n, const StreamKey& key) {
  auto rng = make_stream(key);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (auto& i : idx) i = pick(rng);
  return idx;
}

BootstrapWorld make_world(const MomentSystem& sys, const GmmFit& fit, const ThresholdParams& theta0_star,
                          const StreamKey& key) {
  return WorldGenerator(sys, fit, theta0_star).make(key);
}

BootstrapWorld make_world(const MomentSystem& sys, const GmmFit& fit, const ThresholdParams& theta0_star,
                          std::vector<int> index) {
  return WorldGenerator(sys, fit, theta0_star).make(std::move(index));
}

VectorXd bootstrap_moment(const BootstrapWorld& world, const ThresholdParams& theta) {
  const auto& s = world.system;
  return s.v_bar() + s.m_bar(theta.gamma) * theta.alpha();
}

double bootstrap_criterion(const BootstrapWorld& world, const MatrixXd& W, const ThresholdParams& theta) {
  const VectorXd g = bootstrap_moment(world, theta);
  return g.dot(W * g);
}

MatrixXd bootstrap_weight(const BootstrapWorld& world, const GammaGrid& grid, const GmmConfig& cfg) {
  const GridMoments gm = grid_moments(world.system, grid.points);
  const MatrixXd I = MatrixXd::Identity(world.system.k(), world.system.k());
  const auto first = profile_criterion(gm, Restriction::none, I, cfg.rank_tol);
  const auto& best = first[profile_argmin(first)];
  return weight_matrix(world.system.unit_moments(best.alpha, best.gamma), cfg);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

double BootstrapRun::quantile(double level) const { return empirical_quantile(stats, level); }

double BootstrapRun::p_value(double observed) const {
  if (stats.empty()) throw DimensionError("p-value of an empty bootstrap run");
  const auto hits = std::count_if(stats.begin(), stats.end(), [&](double s) { return s >= observed; });
  return static_cast<double>(hits) / static_cast<double>(stats.size());
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Unrestricted two-stage profile inside a world: W* from the identity-weighted
/// initial estimator, then the profile under W*.
struct WorldProfile {
  MatrixXd W;
  std::vector<ProfilePoint> profile;
  std::size_t best = 0;
};

WorldProfile world_profile(const MomentSystem& wsys, const GridMoments& gm, const GmmConfig& cfg) {
  WorldProfile out;
  const MatrixXd I = MatrixXd::Identity(wsys.k(), wsys.k());
  const auto first = profile_criterion(gm, Restriction::none, I, cfg.rank_tol);
  const auto& b1 = first[profile_argmin(first)];
  out.W = weight_matrix(wsys.unit_moments(b1.alpha, b1.gamma), cfg);
  out.profile = profile_criterion(gm, Restriction::none, out.W, cfg.rank_tol);
  out.best = profile_argmin(out.profile);
  return out;
}

/// Per-replicate output: a scalar statistic and optionally a coefficient row.
struct Replicate {
  bool ok = false;
  double stat = kNaN;
  VectorXd coef;
};

template <class Body>
BootstrapRun run_replicates(Scheme scheme, std::uint64_t point, int B, const BootstrapConfig& cfg,
                            const WorldGenerator& gen, Body&& body) {
  std::vector<Replicate> reps(static_cast<std::size_t>(B));
  parallel_for(reps.size(), cfg.workers, [&](std::size_t b) {
    const BootstrapWorld world = gen.make(StreamKey{cfg.seed, stream_kind(scheme), point, b});
    try {
      reps[b] = body(world);
      reps[b].ok = true;
    } catch (const SingularityError&) {
    } catch (const RankError&) {
    } catch (const EstimationError&) {
    }
  });

  BootstrapRun run;
  run.scheme = scheme;
  run.B = B;
  run.theta0_star = gen.theta0_star();
  Eigen::Index cols = 0;
  for (const auto& r : reps) {
    if (!r.ok) {
      ++run.failures;
      continue;
    }
    run.stats.push_back(r.stat);
    cols = r.coef.size();
  }
  if (run.failures > cfg.max_failure_rate * B) {
    std::ostringstream msg;
    msg << to_string(scheme) << " bootstrap: " << run.failures << " of " << B
        << " replicates failed (singular weight or no feasible grid point)";
    throw EstimationError(msg.str());
  }
  if (cols > 0) {
    run.coef_stats.resize(static_cast<Eigen::Index>(run.stats.size()), cols);
    Eigen::Index row = 0;
    for (const auto& r : reps)
      if (r.ok) run.coef_stats.row(row++) = r.coef.transpose();
  }
  return run;
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid bootstrap
// ---------------------------------------------------------------------------

bool GridBootstrapResult::contains(double gamma) const {
  return std::find(ci_set.begin(), ci_set.end(), gamma) != ci_set.end();
}

bool GridBootstrapResult::convex_contains(double gamma) const {
  return !ci_set.empty() && gamma >= ci_convex.first && gamma <= ci_convex.second;
}

namespace {

void require_profile_of(const GmmFit& fit, const GammaGrid& grid) {
  if (fit.kind != FitKind::unrestricted || fit.profile.size() != grid.size())
    throw DimensionError("grid bootstrap needs the unrestricted fit over the same grid");
  for (std::size_t l = 0; l < grid.size(); ++l)
    if (fit.profile[l].gamma != grid.points[l])
      throw DimensionError("grid bootstrap needs the unrestricted fit over the same grid");
}

}  // namespace

BootstrapRun grid_point_bootstrap(const MomentSystem& sys, const GmmFit& fit, const GammaGrid& grid, std::size_t l,
                                  const BootstrapConfig& cfg) {
  cfg.validate();
  require_profile_of(fit, grid);
  if (l >= grid.size()) throw DimensionError("grid index out of range");
  const auto& pt = fit.profile[l];
  if (!pt.ok) throw RankError("profiled solve failed at the tested grid point", pt.gamma);
  const WorldGenerator gen(sys, fit, ThresholdParams::from_alpha(pt.alpha, pt.gamma));
  const int n = sys.n();
  return run_replicates(Scheme::grid, l, cfg.B, cfg, gen, [&](const BootstrapWorld& w) {
    const GridMoments gm = grid_moments(w.system, grid.points);
    const WorldProfile wp = world_profile(w.system, gm, cfg.gmm);
    if (!wp.profile[l].ok) throw RankError("rank deficient at the tested point", grid.points[l]);
    Replicate r;
    r.stat = clamp_statistic(n * (wp.profile[l].criterion - wp.profile[wp.best].criterion));
    return r;
  });
}

GridBootstrapResult grid_bootstrap_ci(const MomentSystem& sys, const GmmFit& fit, const GammaGrid& grid,
                                      const BootstrapConfig& cfg, const std::optional<std::vector<double>>& points) {
  cfg.validate();
  require_profile_of(fit, grid);
  std::vector<std::size_t> targets;
  if (points) {
    for (double g : *points) {
      const int l = grid.index_of(g);
      if (l < 0) throw DimensionError("tested threshold value is not a grid point");
      targets.push_back(static_cast<std::size_t>(l));
    }
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  } else {
    for (std::size_t l = 0; l < grid.size(); ++l) targets.push_back(l);
  }

  GridBootstrapResult out;
  out.curve.resize(grid.size());
  for (std::size_t l = 0; l < grid.size(); ++l) {
    out.curve[l].gamma = grid.points[l];
    out.curve[l].D_n = fit.profile[l].ok ? clamp_statistic(fit.n * (fit.profile[l].criterion - fit.criterion)) : kNaN;
    out.curve[l].crit = kNaN;
  }
  for (std::size_t l : targets) {
    auto& c = out.curve[l];
    if (!fit.profile[l].ok) {
      out.warnings.push_back("grid point " + std::to_string(c.gamma) + " skipped: rank deficient");
      continue;
    }
    const BootstrapRun run = grid_point_bootstrap(sys, fit, grid, l, cfg);
    c.evaluated = true;
    c.failures = run.failures;
    c.crit = run.quantile(1.0 - cfg.tau);
    c.accepted = c.D_n <= c.crit;
    if (c.accepted) out.ci_set.push_back(c.gamma);
  }
  if (out.ci_set.empty()) {
    out.ci_convex = {kNaN, kNaN};
    out.warnings.push_back("confidence set is empty");
  } else {
    out.ci_convex = {out.ci_set.front(), out.ci_set.back()};
    for (std::size_t l : targets) {
      const auto& c = out.curve[l];
      if (c.evaluated && !c.accepted && c.gamma > out.ci_convex.first && c.gamma < out.ci_convex.second) {
        out.warnings.push_back("confidence set is not an interval; reporting its convex hull as well");
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coefficient bootstraps
// ---------------------------------------------------------------------------

BootstrapRun estimator_bootstrap(const MomentSystem& sys, const GmmFit& fit, const ThresholdParams& theta0_star,
                                 const GammaGrid& grid, const BootstrapConfig& cfg, Scheme scheme) {
  cfg.validate();
  const WorldGenerator gen(sys, fit, theta0_star);
  const double root_n = std::sqrt(static_cast<double>(sys.n()));
  const VectorXd center = theta0_star.stacked();
  return run_replicates(scheme, 0, cfg.B, cfg, gen, [&](const BootstrapWorld& w) {
    const GridMoments gm = grid_moments(w.system, grid.points);
    const WorldProfile wp = world_profile(w.system, gm, cfg.gmm);
    const auto& best = wp.profile[wp.best];
    Replicate r;
    r.coef = root_n * (ThresholdParams::from_alpha(best.alpha, best.gamma).stacked() - center);
    r.stat = r.coef(r.coef.size() - 1);
    return r;
  });
}

std::vector<ComponentCI> component_cis(const BootstrapRun& run, const ThresholdParams& estimate, int n, double tau) {
  const VectorXd est = estimate.stacked();
  if (run.coef_stats.cols() != est.size()) throw DimensionError("bootstrap run has no matching coefficient draws");
  if (run.coef_stats.rows() == 0) throw DimensionError("bootstrap run has no surviving replicates");
  const double root_n = std::sqrt(static_cast<double>(n));
  std::vector<ComponentCI> out(static_cast<std::size_t>(est.size()));
  for (Eigen::Index j = 0; j < est.size(); ++j) {
    std::vector<double> s(run.coef_stats.col(j).data(), run.coef_stats.col(j).data() + run.coef_stats.rows());
    std::vector<double> a(s.size());
    std::transform(s.begin(), s.end(), a.begin(), [](double x) { return std::abs(x); });
    std::sort(s.begin(), s.end());
    std::sort(a.begin(), a.end());
    const double q_lo = empirical_quantile_sorted(s, tau / 2.0);
    const double q_hi = empirical_quantile_sorted(s, 1.0 - tau / 2.0);
    const double q_abs = empirical_quantile_sorted(a, 1.0 - tau);
    auto& c = out[static_cast<std::size_t>(j)];
    c.estimate = est(j);
    c.asym_lo = est(j) - q_hi / root_n;
    c.asym_hi = est(j) - q_lo / root_n;
    c.sym_lo = est(j) - q_abs / root_n;
    c.sym_hi = est(j) + q_abs / root_n;
  }
  return out;
}

double shrinkage_weight(double T_n, double c_hat, int n) {
  if (!(c_hat > 0.0)) throw EstimationError("C_hat must be positive");
  return std::min(T_n / (c_hat * std::pow(static_cast<double>(n), 0.25)), 1.0);
}

ThresholdParams shrink_params(const ThresholdParams& theta_hat, const ThresholdParams& theta_tilde, double w) {
  return ThresholdParams::from_stacked(w * theta_hat.stacked() + (1.0 - w) * theta_tilde.stacked());
}

CoefficientBootstrapResult residual_bootstrap_ci(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_kink,
                                                 const GammaGrid& grid, const BootstrapConfig& cfg,
                                                 std::optional<double> c_hat) {
  cfg.validate();
  CoefficientBootstrapResult out;
  out.T_n = continuity_stat(fit, fit_kink).value;
  out.c_hat = c_hat ? *c_hat : compute_c_hat(sys, fit, fit_kink, grid, cfg);
  out.w_n = shrinkage_weight(out.T_n, out.c_hat, sys.n());
  out.theta0_star = shrink_params(fit.theta_hat, fit_kink.theta_hat, out.w_n);
  out.run = estimator_bootstrap(sys, fit, out.theta0_star, grid, cfg, Scheme::residual);
  out.cis = component_cis(out.run, fit.theta_hat, sys.n(), cfg.tau);
  return out;
}

CoefficientBootstrapResult nonparametric_bootstrap_ci(const MomentSystem& sys, const GmmFit& fit,
                                                      const GammaGrid& grid, const BootstrapConfig& cfg) {
  cfg.validate();
  CoefficientBootstrapResult out;
  out.T_n = kNaN;
  out.c_hat = kNaN;
  out.w_n = 1.0;
  out.theta0_star = fit.theta_hat;
  out.run = estimator_bootstrap(sys, fit, fit.theta_hat, grid, cfg, Scheme::nonparametric);
  out.cis = component_cis(out.run, fit.theta_hat, sys.n(), cfg.tau);
  return out;
}

// ---------------------------------------------------------------------------
// Continuity and linearity tests
// ---------------------------------------------------------------------------

BootstrapRun continuity_bootstrap(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_kink,
                                  const GammaGrid& grid, const BootstrapConfig& cfg, int replicates) {
  cfg.validate();
  if (fit_kink.kind != FitKind::continuity_restricted) throw DimensionError("expected a continuity-restricted fit");
  const WorldGenerator gen(sys, fit, fit_kink.theta_hat);
  const int n = sys.n();
  return run_replicates(Scheme::continuity, 0, replicates, cfg, gen, [&](const BootstrapWorld& w) {
    const GridMoments gm = grid_moments(w.system, grid.points);
    const WorldProfile wp = world_profile(w.system, gm, cfg.gmm);
    const auto kink = profile_criterion(gm, Restriction::continuity, wp.W, cfg.gmm.rank_tol);
    const auto& kb = kink[profile_argmin(kink)];
    Replicate r;
    r.stat = clamp_statistic(n * (kb.criterion - wp.profile[wp.best].criterion));
    return r;
  });
}

double c_hat_from_run(const BootstrapRun& run, double level) {
  const double c = run.quantile(level);
  if (!(c > 0.0)) throw EstimationError("C_hat is not positive; the continuity bootstrap distribution is degenerate");
  return c;
}

double compute_c_hat(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_kink, const GammaGrid& grid,
                     const BootstrapConfig& cfg) {
  const BootstrapRun run = continuity_bootstrap(sys, fit, fit_kink, grid, cfg, cfg.c_hat_replicates());
  return c_hat_from_run(run, cfg.c_hat_level);
}

TestResult continuity_bootstrap_test(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_kink,
                                     const GammaGrid& grid, const BootstrapConfig& cfg) {
  TestResult out;
  out.stat = continuity_stat(fit, fit_kink);
  out.run = continuity_bootstrap(sys, fit, fit_kink, grid, cfg, cfg.B);
  out.p_value = out.run.p_value(out.stat.value);
  out.crit = out.run.quantile(1.0 - cfg.tau);
  out.reject = out.stat.value > out.crit;
  return out;
}

TestResult linearity_bootstrap_test(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_linear,
                                    const GammaGrid& grid, const BootstrapConfig& cfg,
                                    std::optional<double> gamma0_star) {
  cfg.validate();
  if (fit_linear.kind != FitKind::linear_null) throw DimensionError("expected a linear-null fit");
  ThresholdParams theta0;
  theta0.beta = cfg.linearity_beta == LinearityBeta::null_imposed ? fit_linear.theta_hat.beta : fit.theta_hat.beta;
  theta0.delta = VectorXd::Zero(sys.p() + 1);
  theta0.gamma = gamma0_star.value_or(0.0);

  TestResult out;
  out.stat = sup_wald(sys, grid, cfg.gmm).stat;
  const WorldGenerator gen(sys, fit, theta0);
  out.run = run_replicates(Scheme::linearity, 0, cfg.B, cfg, gen, [&](const BootstrapWorld& w) {
    Replicate r;
    r.stat = sup_wald(w.system, grid, cfg.gmm).stat.value;
    return r;
  });
  out.p_value = out.run.p_value(out.stat.value);
  out.crit = out.run.quantile(1.0 - cfg.tau);
  out.reject = out.stat.value > out.crit;
  return out;
}

}  // namespace dptr
