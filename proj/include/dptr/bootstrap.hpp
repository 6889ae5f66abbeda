#pragma once

#include "dptr/gmm.hpp"
#include "dptr/random.hpp"
#include "dptr/statistics.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dptr {

enum class Scheme { grid, residual, continuity, linearity, nonparametric };
const char* to_string(Scheme s);
StreamKind stream_kind(Scheme s);

/// Which beta the linearity bootstrap plants in its null DGP.
enum class LinearityBeta { null_imposed, unrestricted };

struct BootstrapConfig {
  int B = 200;
  std::uint64_t seed = 1;
  double tau = 0.05;
  double c_hat_level = 0.5;
  int B_C = 0;  // replicates for C_hat; 0 means B
  int workers = 1;
  double max_failure_rate = 0.05;
  LinearityBeta linearity_beta = LinearityBeta::null_imposed;
  GmmConfig gmm;

  int c_hat_replicates() const { return B_C > 0 ? B_C : B; }
  void validate() const;
};

/// One bootstrap sample: units resampled jointly with their regressors,
/// instruments and residuals, outcomes regenerated from theta0*.
struct BootstrapWorld {
  std::vector<int> index;     // unit i of the world is original unit index[i]
  ThresholdParams theta0_star;
  MomentSystem system;        // resampled, dy replaced by dy*, recentered by g_bar_n(theta_hat)
  MatrixXd residuals_star;    // n x periods
};

/// Precomputes dy* for every original unit so that building a world is a gather.
///
/// dy*_it = dx_it' beta0* + 1_it(gamma0*)' X_it delta0* + e_hat_it is evaluated
/// as dy_it + [fitted_it(theta0*) - fitted_it(theta_hat)], which is the same
/// number in exact arithmetic and reproduces dy_it bitwise when theta0* = theta_hat.
class WorldGenerator {
 public:
  WorldGenerator(const MomentSystem& sys, const GmmFit& fit, ThresholdParams theta0_star);

  BootstrapWorld make(std::vector<int> index) const;
  BootstrapWorld make(const StreamKey& key) const;
  const ThresholdParams& theta0_star() const { return theta0_; }

  /// Exact resampling expectation of the recentered moment at theta0*:
  /// the equal-weight average of g*_j(theta0*) over the n single-unit draws
  /// minus g_bar_n(theta_hat).
  VectorXd resampling_expectation() const;

 private:
  const MomentSystem* sys_;
  const GmmFit* fit_;
  ThresholdParams theta0_;
  std::vector<VectorXd> dy_star_;
};

std::vector<int> draw_index(int n, const StreamKey& key);

BootstrapWorld make_world(const MomentSystem& sys, const GmmFit& fit, const ThresholdParams& theta0_star,
                          const StreamKey& key);
BootstrapWorld make_world(const MomentSystem& sys, const GmmFit& fit, const ThresholdParams& theta0_star,
                          std::vector<int> index);

/// W*_n from the identity-weighted initial bootstrap estimator over the grid.
MatrixXd bootstrap_weight(const BootstrapWorld& world, const GammaGrid& grid, const GmmConfig& cfg = {});
/// Q*_n(theta) = g*_bar(theta)' W* g*_bar(theta) with the recentered moment.
double bootstrap_criterion(const BootstrapWorld& world, const MatrixXd& W, const ThresholdParams& theta);
/// Recentered bootstrap sample moment g*_bar(theta).
VectorXd bootstrap_moment(const BootstrapWorld& world, const ThresholdParams& theta);

/// Replicate outcomes of one scheme. Failed replicates are dropped; `stats` and
/// `coef_stats` hold the survivors in replicate order.
struct BootstrapRun {
  Scheme scheme = Scheme::grid;
  int B = 0;
  int failures = 0;
  std::vector<double> stats;
  MatrixXd coef_stats;  // survivors x (2p+2): sqrt(n) (theta* - theta0*), gamma last
  ThresholdParams theta0_star;

  /// Type-1 empirical quantile of `stats`.
  double quantile(double level) const;
  /// Fraction of replicate statistics >= observed.
  double p_value(double observed) const;
};

// --------------------------------------------------------------------------
// Grid bootstrap for the threshold location
// --------------------------------------------------------------------------

struct GridPointResult {
  double gamma = 0.0;
  double D_n = 0.0;
  double crit = 0.0;
  bool accepted = false;
  bool evaluated = false;
  int failures = 0;
};

struct GridBootstrapResult {
  std::vector<GridPointResult> curve;  // one entry per grid point
  std::vector<double> ci_set;          // accepted grid points
  std::pair<double, double> ci_convex{0.0, 0.0};
  std::vector<std::string> warnings;

  bool contains(double gamma) const;
  bool convex_contains(double gamma) const;
};

/// Null-imposed bootstrap of D_n at grid point l: theta0* = (alpha_hat(gamma_l)', gamma_l)'.
BootstrapRun grid_point_bootstrap(const MomentSystem& sys, const GmmFit& fit, const GammaGrid& grid,
                                  std::size_t l, const BootstrapConfig& cfg);

/// Confidence set {gamma in grid : D_n(gamma) <= (1-tau) quantile of D*_n(gamma)}.
/// `fit` must be the unrestricted fit over `grid`. When `points` is given only
/// those grid values are tested (the rest of the curve is marked unevaluated).
GridBootstrapResult grid_bootstrap_ci(const MomentSystem& sys, const GmmFit& fit, const GammaGrid& grid,
                                      const BootstrapConfig& cfg,
                                      const std::optional<std::vector<double>>& points = std::nullopt);

// --------------------------------------------------------------------------
// Coefficient bootstraps
// --------------------------------------------------------------------------

/// Full unrestricted re-estimation in worlds generated from theta0*.
BootstrapRun estimator_bootstrap(const MomentSystem& sys, const GmmFit& fit, const ThresholdParams& theta0_star,
                                 const GammaGrid& grid, const BootstrapConfig& cfg, Scheme scheme);

struct ComponentCI {
  double estimate = 0.0;
  double asym_lo = 0.0;
  double asym_hi = 0.0;
  double sym_lo = 0.0;
  double sym_hi = 0.0;
};

/// Percentile and symmetric-percentile intervals for every component of theta.
std::vector<ComponentCI> component_cis(const BootstrapRun& run, const ThresholdParams& estimate, int n, double tau);

struct CoefficientBootstrapResult {
  double T_n = 0.0;
  double c_hat = 0.0;
  double w_n = 1.0;
  ThresholdParams theta0_star;
  BootstrapRun run;
  std::vector<ComponentCI> cis;  // beta, delta, gamma
};

/// w_n = min(T_n / (C_hat n^{1/4}), 1).
double shrinkage_weight(double T_n, double c_hat, int n);
/// w theta_hat + (1 - w) theta_tilde, componentwise including gamma.
ThresholdParams shrink_params(const ThresholdParams& theta_hat, const ThresholdParams& theta_tilde, double w);

/// Residual bootstrap with the data-driven theta0*. `fit_kink` must share W with `fit`.
/// When `c_hat` is not supplied it is estimated with compute_c_hat.
CoefficientBootstrapResult residual_bootstrap_ci(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_kink,
                                                 const GammaGrid& grid, const BootstrapConfig& cfg,
                                                 std::optional<double> c_hat = std::nullopt);

/// Standard nonparametric bootstrap (theta0* = theta_hat).
CoefficientBootstrapResult nonparametric_bootstrap_ci(const MomentSystem& sys, const GmmFit& fit,
                                                      const GammaGrid& grid, const BootstrapConfig& cfg);

// --------------------------------------------------------------------------
// Continuity and linearity tests
// --------------------------------------------------------------------------

/// T*_n replicates from worlds generated with theta0* = theta_tilde.
BootstrapRun continuity_bootstrap(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_kink,
                                  const GammaGrid& grid, const BootstrapConfig& cfg, int replicates);

/// C_hat: the c_hat_level quantile of B_C continuity replicates. Must be positive.
double compute_c_hat(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_kink, const GammaGrid& grid,
                     const BootstrapConfig& cfg);
double c_hat_from_run(const BootstrapRun& run, double level);

struct TestResult {
  TestStat stat;
  double p_value = 1.0;
  double crit = 0.0;  // (1 - tau) quantile
  bool reject = false;
  BootstrapRun run;
};

TestResult continuity_bootstrap_test(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_kink,
                                     const GammaGrid& grid, const BootstrapConfig& cfg);

/// Bootstrap sup-Wald test of delta = 0 with worlds generated from (beta0*, 0).
TestResult linearity_bootstrap_test(const MomentSystem& sys, const GmmFit& fit, const GmmFit& fit_linear,
                                    const GammaGrid& grid, const BootstrapConfig& cfg,
                                    std::optional<double> gamma0_star = std::nullopt);

}  // namespace dptr
