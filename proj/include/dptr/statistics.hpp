#pragma once

#include "dptr/gmm.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace dptr {

enum class StatKind { distance, continuity, supwald };
const char* to_string(StatKind k);

struct TestStat {
  StatKind kind = StatKind::distance;
  double value = 0.0;
  int n = 0;
  std::optional<double> at_gamma;
};

/// Rounding noise above -1e-10 is clamped to zero; anything lower means the
/// restricted optimum beat the unrestricted one and throws ConsistencyError.
double clamp_statistic(double value, double tol = 1e-10);

/// n (min_alpha Q(alpha, gamma) - Q(theta_hat)). Both fits must use the same W.
TestStat distance_stat(const GmmFit& fit_unres, const GmmFit& fit_at_gamma);

/// n (Q(theta_tilde) - Q(theta_hat)). Both fits must use the same W.
TestStat continuity_stat(const GmmFit& fit_unres, const GmmFit& fit_kink);

struct SupWaldResult {
  TestStat stat;
  std::vector<double> gamma;
  std::vector<double> wald;  // NaN where the point was skipped
  int skipped = 0;
};

/// Wald statistic for delta = 0 at a fixed gamma, with the per-gamma two-stage
/// weight W(gamma) and the sandwich covariance built from Omega(gamma).
double wald_at_gamma(const MomentSystem& sys, const GridMoments& gm, std::size_t l, const GmmConfig& cfg);

/// Supremum over the grid of the Wald statistics for delta = 0.
SupWaldResult sup_wald(const MomentSystem& sys, const GammaGrid& grid, const GmmConfig& cfg = {});

/// Plug-in ingredients of the limit law of the continuity statistic.
struct ContinuityLimitPlugins {
  MatrixXd omega_hat;
  MatrixXd M1_hat;  // k x p
  MatrixXd M2_hat;  // k x (p+1), at gamma_hat
  MatrixXd psi_hat;
  MatrixXd N2_hat;  // k x 2
  double gamma_hat = 0.0;
  double delta3_hat = 0.0;
};

/// Plug-ins evaluated at the unrestricted estimate.
ContinuityLimitPlugins continuity_plugins(const MomentSystem& sys, const GmmFit& fit_unres);

/// Sorted i.i.d. draws of V1 - V2 + V3. Draws are generated in blocks of 1024
/// from counter-keyed streams, so the result is independent of `workers`.
std::vector<double> simulate_continuity_limit(const ContinuityLimitPlugins& plugs, int draws,
                                              std::uint64_t seed, int workers = 1);

/// Per-draw components, exposed for distributional checks.
struct LimitDraw {
  double v1 = 0.0;
  double v2 = 0.0;
  double v3 = 0.0;
};
std::vector<LimitDraw> simulate_continuity_limit_components(const ContinuityLimitPlugins& plugs,
                                                            int draws, std::uint64_t seed,
                                                            int workers = 1);

/// Type-1 empirical quantile: order statistic ceil(level * m) of the m values.
double empirical_quantile(std::vector<double> values, double level);
double empirical_quantile_sorted(const std::vector<double>& sorted, double level);

}  // namespace dptr
