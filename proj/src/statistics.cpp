#include "dptr/statistics.hpp"

#include "dptr/errors.hpp"
#include "dptr/parallel.hpp"
#include "dptr/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dptr {

const char* to_string(StatKind k) {
  switch (k) {
    case StatKind::distance: return "distance";
    case StatKind::continuity: return "continuity";
    case StatKind::supwald: return "supwald";
  }
  return "unknown";
}

double clamp_statistic(double value, double tol) {
  if (std::isnan(value)) throw ConsistencyError("statistic is NaN");
  if (value < -tol) {
    std::ostringstream msg;
    msg << "restricted criterion below the unrestricted one: statistic = " << value;
    throw ConsistencyError(msg.str());
  }
  return value < 0.0 ? 0.0 : value;
}

namespace {

void require_same_weighting(const GmmFit& a, const GmmFit& b) {
  if (a.k != b.k || a.n != b.n) throw DimensionError("fits have different moment dimensions or sample sizes");
  if (a.W.rows() != b.W.rows() || !(a.W - b.W).isZero(1e-12 * std::max(1.0, a.W.cwiseAbs().maxCoeff())))
    throw DimensionError("fits were computed with different weight matrices");
}

}  // namespace

TestStat distance_stat(const GmmFit& fit_unres, const GmmFit& fit_at_gamma) {
  require_same_weighting(fit_unres, fit_at_gamma);
  TestStat s;
  s.kind = StatKind::distance;
  s.n = fit_unres.n;
  s.at_gamma = fit_at_gamma.theta_hat.gamma;
  s.value = clamp_statistic(fit_unres.n * (fit_at_gamma.criterion - fit_unres.criterion));
  return s;
}

TestStat continuity_stat(const GmmFit& fit_unres, const GmmFit& fit_kink) {
  require_same_weighting(fit_unres, fit_kink);
  TestStat s;
  s.kind = StatKind::continuity;
  s.n = fit_unres.n;
  s.value = clamp_statistic(fit_unres.n * (fit_kink.criterion - fit_unres.criterion));
  return s;
}

// ---------------------------------------------------------------------------
// sup-Wald
// ---------------------------------------------------------------------------

double wald_at_gamma(const MomentSystem& sys, const GridMoments& gm, std::size_t l, const GmmConfig& cfg) {
  const int p = sys.p();
  const double gamma = gm.gamma[l];
  const MatrixXd M = gm.m(l);
  const MatrixXd I = MatrixXd::Identity(sys.k(), sys.k());
  const auto first = profiled_alpha(gm.v, M, gamma, I, Restriction::none, cfg.rank_tol);
  const MatrixXd W = weight_matrix(sys.unit_moments(first.alpha, gamma), cfg);
  const auto second = profiled_alpha(gm.v, M, gamma, W, Restriction::none, cfg.rank_tol);
  const MatrixXd omega = centered_covariance(sys.unit_moments(second.alpha, gamma));

  const MatrixXd WM = W * M;
  Eigen::LDLT<MatrixXd> bread(M.transpose() * WM);
  if (bread.info() != Eigen::Success) throw RankError("singular M'WM in sup-Wald", gamma);
  const MatrixXd a_inv_mw = bread.solve(WM.transpose());             // (M'WM)^-1 M'W
  const MatrixXd V = a_inv_mw * omega * a_inv_mw.transpose();
  const MatrixXd Vd = V.bottomRightCorner(p + 1, p + 1);
  Eigen::LLT<MatrixXd> llt(Vd);
  if (llt.info() != Eigen::Success) throw SingularityError("singular sandwich covariance in sup-Wald", 0.0);
  const VectorXd delta = second.alpha.tail(p + 1);
  return sys.n() * delta.dot(llt.solve(delta));
}

SupWaldResult sup_wald(const MomentSystem& sys, const GammaGrid& grid, const GmmConfig& cfg) {
  if (grid.points.empty()) throw EstimationError("empty threshold grid");
  const GridMoments gm = grid_moments(sys, grid.points);
  SupWaldResult out;
  out.stat.kind = StatKind::supwald;
  out.stat.n = sys.n();
  out.gamma = gm.gamma;
  out.wald.assign(gm.size(), std::numeric_limits<double>::quiet_NaN());
  double best = -1.0;
  for (std::size_t l = 0; l < gm.size(); ++l) {
    try {
      out.wald[l] = wald_at_gamma(sys, gm, l, cfg);
      if (out.wald[l] > best) {
        best = out.wald[l];
        out.stat.at_gamma = gm.gamma[l];
      }
    } catch (const RankError&) {
      ++out.skipped;
    } catch (const SingularityError&) {
      ++out.skipped;
    }
  }
  if (out.skipped == static_cast<int>(gm.size())) throw EstimationError("sup-Wald: every grid point is singular");
  out.stat.value = best;
  return out;
}

// ---------------------------------------------------------------------------
// Continuity limit simulation
// ---------------------------------------------------------------------------

ContinuityLimitPlugins continuity_plugins(const MomentSystem& sys, const GmmFit& fit_unres) {
  const int p = sys.p();
  ContinuityLimitPlugins pl;
  pl.omega_hat = fit_unres.omega_hat;
  pl.M1_hat = sys.m1_bar();
  pl.gamma_hat = fit_unres.theta_hat.gamma;
  pl.delta3_hat = fit_unres.theta_hat.delta(p);
  pl.M2_hat = sys.m2_bar(pl.gamma_hat);

  Eigen::LLT<MatrixXd> om(pl.omega_hat);
  if (om.info() != Eigen::Success) throw SingularityError("Omega_hat is not positive definite", 0.0);
  const MatrixXd oi_m1 = om.solve(pl.M1_hat);
  const MatrixXd oi = om.solve(MatrixXd::Identity(sys.k(), sys.k()));
  Eigen::LDLT<MatrixXd> inner(pl.M1_hat.transpose() * oi_m1);
  if (inner.info() != Eigen::Success) throw SingularityError("M1' Omega^-1 M1 is singular", 0.0);
  pl.psi_hat = oi - oi_m1 * inner.solve(oi_m1.transpose());
  pl.psi_hat = (0.5 * (pl.psi_hat + pl.psi_hat.transpose())).eval();

  MatrixXd E = MatrixXd::Zero(p + 1, 2);
  E(0, 0) = -pl.gamma_hat;
  E(p, 0) = 1.0;
  E(0, 1) = -pl.delta3_hat;
  pl.N2_hat = pl.M2_hat * E;
  return pl;
}

namespace {

// Rows K with V = |K xi|^2 for xi ~ N(0, I_k), Z = L xi.
MatrixXd projection_rows(const MatrixXd& psi, const MatrixXd& N, const MatrixXd& L) {
  Eigen::LLT<MatrixXd> g(N.transpose() * psi * N);
  if (g.info() != Eigen::Success) throw SingularityError("projection Gram matrix in the limit law is singular", 0.0);
  const MatrixXd P = N.transpose() * psi * L;
  return g.matrixL().solve(P);
}

constexpr int kDrawBlock = 1024;

}  // namespace

std::vector<LimitDraw> simulate_continuity_limit_components(const ContinuityLimitPlugins& plugs, int draws,
                                                            std::uint64_t seed, int workers) {
  if (draws < 1) throw DimensionError("need at least one draw");
  Eigen::LLT<MatrixXd> om(plugs.omega_hat);
  if (om.info() != Eigen::Success) throw SingularityError("Omega_hat is not positive definite", 0.0);
  const MatrixXd L = om.matrixL();
  const MatrixXd K1 = projection_rows(plugs.psi_hat, plugs.M2_hat, L);
  const MatrixXd K2 = projection_rows(plugs.psi_hat, plugs.N2_hat, L);
  const Eigen::Index k = plugs.omega_hat.rows();

  std::vector<LimitDraw> out(static_cast<std::size_t>(draws));
  const std::size_t blocks = (static_cast<std::size_t>(draws) + kDrawBlock - 1) / kDrawBlock;
  parallel_for(blocks, workers, [&](std::size_t b) {
    auto rng = make_stream(StreamKey{seed, StreamKind::limit, 0, b});
    std::normal_distribution<double> normal;
    VectorXd xi(k);
    const std::size_t end = std::min(out.size(), (b + 1) * kDrawBlock);
    for (std::size_t d = b * kDrawBlock; d < end; ++d) {
      for (Eigen::Index j = 0; j < k; ++j) xi(j) = normal(rng);
      const double z0 = std::max(0.0, normal(rng));
      out[d] = LimitDraw{(K1 * xi).squaredNorm(), (K2 * xi).squaredNorm(), z0 * z0};
    }
  });
  return out;
}

std::vector<double> simulate_continuity_limit(const ContinuityLimitPlugins& plugs, int draws, std::uint64_t seed,
                                              int workers) {
  const auto comps = simulate_continuity_limit_components(plugs, draws, seed, workers);
  std::vector<double> out;
  out.reserve(comps.size());
  for (const auto& c : comps) out.push_back(c.v1 - c.v2 + c.v3);
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Quantiles
// ---------------------------------------------------------------------------

double empirical_quantile_sorted(const std::vector<double>& sorted, double level) {
  if (sorted.empty()) throw DimensionError("quantile of an empty sample");
  if (!(level > 0.0 && level <= 1.0)) throw DimensionError("quantile level must be in (0, 1]");
  const double m = static_cast<double>(sorted.size());
  // 1e-9 guards levels such as 0.95 * 200 that are integers up to rounding.
  auto rank = static_cast<std::size_t>(std::ceil(level * m - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double empirical_quantile(std::vector<double> values, double level) {
  std::sort(values.begin(), values.end());
  return empirical_quantile_sorted(values, level);
}

}  // namespace dptr
