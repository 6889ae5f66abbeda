#pragma once

#include "dptr/moment_system.hpp"
#include "dptr/panel.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dptr {

struct GmmConfig {
  bool two_stage = true;
  /// Relative pivot threshold of the column-pivoted QR used for the profiled solve.
  double rank_tol = 1e-9;
  /// Relative jitter eps * tr(Sigma) / k added once when Sigma is near singular.
  double jitter_eps = 1e-10;
  /// Largest accepted eigenvalue ratio of the centered moment covariance.
  double max_condition = 1e12;
};

/// Candidate threshold locations, strictly increasing.
struct GammaGrid {
  enum class Construction { explicit_points, quantile };

  std::vector<double> points;
  Construction construction = Construction::explicit_points;
  double lo = 0.1;
  double hi = 0.9;
  int count = 0;

  std::size_t size() const { return points.size(); }
  /// Index of gamma in the grid, or -1.
  int index_of(double gamma) const;

  /// `count` order statistics from the `lo` to the `hi` quantile of `sample`, with
  /// equal numbers of observations between consecutive points. Duplicated values
  /// are dropped, so the result may have fewer than `count` points.
  static GammaGrid quantile(std::vector<double> sample, double lo, double hi, int count);
  /// Validates that points are strictly increasing and inside [min, max] of sample.
  static GammaGrid explicit_points(std::vector<double> points, std::span<const double> sample);
  /// Grid merged with extra points (kept sorted and unique).
  GammaGrid with_points(std::span<const double> extra) const;
};

/// Default grid: 81 points from the 10th to the 90th percentile of the pooled threshold sample.
GammaGrid default_grid(const MomentSystem& sys, int count = 81, double lo = 0.1, double hi = 0.9);

enum class FitKind { unrestricted, gamma_restricted, continuity_restricted, linear_null };
enum class Stage { first, second };

const char* to_string(FitKind k);

/// Kink (continuity-restricted) parameters psi = (beta', delta3, gamma)'.
struct KinkParams {
  VectorXd beta;
  double delta3 = 0.0;
  double gamma = 0.0;

  /// (beta', -gamma delta3, 0', delta3, gamma)'.
  ThresholdParams embed() const;
};

struct ProfilePoint {
  double gamma = 0.0;
  double criterion = 0.0;
  VectorXd alpha;  // full 2p+1 coefficient vector (embedded for restricted fits)
  bool ok = false;
};

struct GmmFit {
  FitKind kind = FitKind::unrestricted;
  Stage stage = Stage::second;
  ThresholdParams theta_hat;
  ThresholdParams theta_first;        // first-stage estimate used to build W
  std::optional<KinkParams> kink;     // continuity-restricted fits only
  MatrixXd W;
  double criterion = 0.0;             // Q_n(theta_hat) = g_bar' W g_bar
  std::vector<ProfilePoint> profile;
  MatrixXd residuals;                 // n x (T - t0 + 1) at theta_hat
  MatrixXd omega_hat;                 // centered covariance of g_i(theta_hat)
  VectorXd g_bar_hat;                 // mean of g_i(theta_hat), not recentered
  int n = 0;
  int k = 0;
  std::vector<std::string> warnings;
};

/// Which linear restriction on alpha the profiled solve imposes at each gamma.
enum class Restriction {
  none,        // alpha free
  continuity,  // delta2 = 0, delta1 = -delta3 gamma
  linear,      // delta = 0
};

/// Centered covariance (1/n) sum g_i g_i' - g_bar g_bar' of an n x k moment matrix.
MatrixXd centered_covariance(const MatrixXd& g_units);

/// Inverse of the centered covariance of the unit moments. Falls back to one
/// jittered retry; throws SingularityError with the smallest eigenvalue otherwise.
MatrixXd weight_matrix(const MatrixXd& g_units, const GmmConfig& cfg = {});
MatrixXd weight_matrix(const MomentEvaluation& ev, const GmmConfig& cfg = {});

struct ProfiledAlpha {
  VectorXd alpha;
  double criterion = 0.0;
};

/// Closed-form minimiser of Q(alpha, gamma) = (v + M a)' W (v + M a) over alpha,
/// with M = M_bar(gamma) J for the restriction's selection matrix J.
ProfiledAlpha profiled_alpha(const VectorXd& v, const MatrixXd& m_full, double gamma,
                             const MatrixXd& W, Restriction r = Restriction::none,
                             double rank_tol = GmmConfig{}.rank_tol);
ProfiledAlpha profiled_alpha(const MomentSystem& sys, double gamma, const MatrixXd& W,
                             Restriction r = Restriction::none,
                             double rank_tol = GmmConfig{}.rank_tol);

/// Q(alpha, gamma) evaluated from the moment decomposition.
double gmm_criterion(const MomentSystem& sys, const ThresholdParams& theta, const MatrixXd& W);

/// Profiled criterion at every grid point under a fixed weight matrix; points
/// whose weighted Jacobian is rank deficient are marked !ok.
std::vector<ProfilePoint> profile_criterion(const GridMoments& gm, Restriction r,
                                            const MatrixXd& W, double rank_tol);
/// Smallest criterion, ties broken towards the smallest gamma. Throws EstimationError
/// if every point failed.
std::size_t profile_argmin(const std::vector<ProfilePoint>& profile);

/// Two-stage GMM over a grid. When `weight` is given the first stage is skipped
/// and the supplied matrix is used as W.
GmmFit fit_profiled(const MomentSystem& sys, const GridMoments& gm, Restriction r,
                    const GmmConfig& cfg, const std::optional<MatrixXd>& weight = std::nullopt);

GmmFit fit_unrestricted(const MomentSystem& sys, const GammaGrid& grid, const GmmConfig& cfg = {});
GmmFit fit_unrestricted(const PanelDataset& panel, const InstrumentSpec& spec, const GammaGrid& grid,
                        const GmmConfig& cfg = {});

/// Threshold pinned at gamma. With `weight` (typically the unrestricted fit's W)
/// this is the inner minimisation of the distance statistic; without it the fit
/// runs its own two stages at fixed gamma.
GmmFit fit_gamma_restricted(const MomentSystem& sys, double gamma, const GmmConfig& cfg = {},
                            const std::optional<MatrixXd>& weight = std::nullopt);

/// Continuity-restricted (kink) fit profiled over the grid.
GmmFit fit_continuity_restricted(const MomentSystem& sys, const GammaGrid& grid,
                                 const GmmConfig& cfg = {},
                                 const std::optional<MatrixXd>& weight = std::nullopt);

/// Linear dynamic panel GMM with delta = 0. The threshold of the returned
/// parameters is irrelevant and set to 0.
GmmFit fit_linear_null(const MomentSystem& sys, const GmmConfig& cfg = {});

}  // namespace dptr
