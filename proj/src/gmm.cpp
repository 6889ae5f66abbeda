#include "dptr/gmm.hpp"

#include "dptr/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dptr {

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

int GammaGrid::index_of(double gamma) const {
  auto it = std::lower_bound(points.begin(), points.end(), gamma);
  if (it == points.end() || *it != gamma) return -1;
  return static_cast<int>(it - points.begin());
}

GammaGrid GammaGrid::quantile(std::vector<double> sample, double lo, double hi, int count) {
  if (sample.empty()) throw DimensionError("empty threshold sample");
  if (!(lo >= 0.0 && lo <= hi && hi <= 1.0)) throw DimensionError("quantile grid needs 0 <= lo <= hi <= 1");
  if (count < 1) throw DimensionError("quantile grid needs at least one point");
  std::sort(sample.begin(), sample.end());
  const double last = static_cast<double>(sample.size() - 1);
  GammaGrid g;
  g.construction = Construction::quantile;
  g.lo = lo;
  g.hi = hi;
  g.count = count;
  for (int l = 0; l < count; ++l) {
    const double level = count == 1 ? lo : lo + (hi - lo) * l / (count - 1);
    const auto pos = static_cast<std::size_t>(std::llround(level * last));
    const double v = sample[pos];
    if (g.points.empty() || v > g.points.back()) g.points.push_back(v);
  }
  return g;
}

GammaGrid GammaGrid::explicit_points(std::vector<double> points, std::span<const double> sample) {
  if (points.empty()) throw DimensionError("grid has no points");
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i] > points[i - 1])) throw DimensionError("grid points must be strictly increasing");
  if (!sample.empty()) {
    const auto [mn, mx] = std::minmax_element(sample.begin(), sample.end());
    if (points.front() < *mn || points.back() > *mx)
      throw DimensionError("grid points must lie within the range of the threshold variable");
  }
  GammaGrid g;
  g.points = std::move(points);
  g.count = static_cast<int>(g.points.size());
  return g;
}

GammaGrid GammaGrid::with_points(std::span<const double> extra) const {
  GammaGrid g = *this;
  g.points.insert(g.points.end(), extra.begin(), extra.end());
  std::sort(g.points.begin(), g.points.end());
  g.points.erase(std::unique(g.points.begin(), g.points.end()), g.points.end());
  g.construction = Construction::explicit_points;
  g.count = static_cast<int>(g.points.size());
  return g;
}

GammaGrid default_grid(const MomentSystem& sys, int count, double lo, double hi) {
  return GammaGrid::quantile(sys.threshold_sample(), lo, hi, count);
}

const char* to_string(FitKind k) {
  switch (k) {
    case FitKind::unrestricted: return "unrestricted";
    case FitKind::gamma_restricted: return "gamma_restricted";
    case FitKind::continuity_restricted: return "continuity_restricted";
    case FitKind::linear_null: return "linear_null";
  }
  return "unknown";
}

ThresholdParams KinkParams::embed() const {
  const Eigen::Index p = beta.size();
  ThresholdParams th;
  th.beta = beta;
  th.delta = VectorXd::Zero(p + 1);
  th.delta(0) = -(gamma * delta3);
  th.delta(p) = delta3;
  th.gamma = gamma;
  return th;
}

// ---------------------------------------------------------------------------
// Weight matrix
// ---------------------------------------------------------------------------

MatrixXd centered_covariance(const MatrixXd& g_units) {
  const MatrixXd c = g_units.rowwise() - g_units.colwise().mean();
  MatrixXd s = MatrixXd::Zero(g_units.cols(), g_units.cols());
  s.selfadjointView<Eigen::Lower>().rankUpdate(c.transpose(), 1.0 / static_cast<double>(g_units.rows()));
  return s.selfadjointView<Eigen::Lower>();
}

MatrixXd weight_matrix(const MatrixXd& g_units, const GmmConfig& cfg) {
  MatrixXd sigma = centered_covariance(g_units);
  const Eigen::Index k = sigma.rows();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  auto ill = [&](const Eigen::SelfAdjointEigenSolver<MatrixXd>& e) {
    const double mx = e.eigenvalues().maxCoeff();
    const double mn = e.eigenvalues().minCoeff();
    return !(mx > 0.0) || !(mn > mx / cfg.max_condition);
  };
  if (ill(es)) {
    const double jitter = cfg.jitter_eps * sigma.trace() / static_cast<double>(k);
    sigma.diagonal().array() += jitter;
    es.compute(sigma);
    if (ill(es)) {
      const double mn = es.eigenvalues().minCoeff();
      std::ostringstream msg;
      msg << "centered moment covariance is singular (smallest eigenvalue " << mn
          << " after jitter " << jitter << ")";
      throw SingularityError(msg.str(), mn);
    }
  }
  const MatrixXd& v = es.eigenvectors();
  MatrixXd w = v * es.eigenvalues().cwiseInverse().asDiagonal() * v.transpose();
  return 0.5 * (w + w.transpose());
}

MatrixXd weight_matrix(const MomentEvaluation& ev, const GmmConfig& cfg) {
  return weight_matrix(ev.g_units, cfg);
}

// ---------------------------------------------------------------------------
// Profiled solve
// ---------------------------------------------------------------------------

namespace {

// Maps the free coefficients of a restriction to the full alpha = (beta', delta')'.
MatrixXd selection(Restriction r, int p, double gamma) {
  const int m = 2 * p + 1;
  switch (r) {
    case Restriction::none:
      return MatrixXd::Identity(m, m);
    case Restriction::continuity: {
      MatrixXd j = MatrixXd::Zero(m, p + 1);
      j.topLeftCorner(p, p).setIdentity();
      j(p, p) = -gamma;
      j(2 * p, p) = 1.0;
      return j;
    }
    case Restriction::linear: {
      MatrixXd j = MatrixXd::Zero(m, p);
      j.topLeftCorner(p, p).setIdentity();
      return j;
    }
  }
  return {};
}

// Upper factor U with W = U'U.
MatrixXd weight_factor(const MatrixXd& W) {
  Eigen::LLT<MatrixXd> llt(W);
  if (llt.info() != Eigen::Success) throw SingularityError("weight matrix is not positive definite", 0.0);
  return llt.matrixU();
}

ProfiledAlpha solve_weighted(const VectorXd& v, const MatrixXd& m_full, double gamma, const MatrixXd& U,
                             Restriction r, double rank_tol) {
  const int p = static_cast<int>((m_full.cols() - 1) / 2);
  const MatrixXd J = selection(r, p, gamma);
  MatrixXd A = r == Restriction::none ? m_full : MatrixXd(m_full * J);
  VectorXd b = v;
  if (U.size() != 0) {
    A = U.triangularView<Eigen::Upper>() * A;
    b = U.triangularView<Eigen::Upper>() * b;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
  qr.setThreshold(rank_tol);
  if (qr.rank() < A.cols()) {
    std::ostringstream msg;
    msg << "weighted moment Jacobian has rank " << qr.rank() << " < " << A.cols() << " at gamma = " << gamma;
    throw RankError(msg.str(), gamma);
  }
  const VectorXd a = qr.solve(-b);
  ProfiledAlpha out;
  out.criterion = (b + A * a).squaredNorm();
  out.alpha = r == Restriction::none ? a : VectorXd(J * a);
  if (r == Restriction::continuity) {
    // exact kink structure
    out.alpha(p) = -(gamma * a(p));
    out.alpha.segment(p + 1, p - 1).setZero();
  }
  return out;
}

bool is_identity(const MatrixXd& W) { return W.isIdentity(0.0); }

}  // namespace

ProfiledAlpha profiled_alpha(const VectorXd& v, const MatrixXd& m_full, double gamma, const MatrixXd& W,
                             Restriction r, double rank_tol) {
  if (v.size() != m_full.rows() || W.rows() != v.size() || W.cols() != v.size())
    throw DimensionError("profiled_alpha: inconsistent dimensions");
  const MatrixXd U = is_identity(W) ? MatrixXd{} : weight_factor(W);
  return solve_weighted(v, m_full, gamma, U, r, rank_tol);
}

ProfiledAlpha profiled_alpha(const MomentSystem& sys, double gamma, const MatrixXd& W, Restriction r,
                             double rank_tol) {
  return profiled_alpha(sys.v_bar(), sys.m_bar(gamma), gamma, W, r, rank_tol);
}

double gmm_criterion(const MomentSystem& sys, const ThresholdParams& theta, const MatrixXd& W) {
  const VectorXd g = sys.v_bar() + sys.m_bar(theta.gamma) * theta.alpha();
  return g.dot(W * g);
}

std::vector<ProfilePoint> profile_criterion(const GridMoments& gm, Restriction r, const MatrixXd& W,
                                            double rank_tol) {
  const MatrixXd U = is_identity(W) ? MatrixXd{} : weight_factor(W);
  std::vector<ProfilePoint> out(gm.size());
  for (std::size_t l = 0; l < gm.size(); ++l) {
    out[l].gamma = gm.gamma[l];
    try {
      auto sol = solve_weighted(gm.v, gm.m(l), gm.gamma[l], U, r, rank_tol);
      out[l].alpha = std::move(sol.alpha);
      out[l].criterion = sol.criterion;
      out[l].ok = true;
    } catch (const RankError&) {
      out[l].criterion = std::numeric_limits<double>::quiet_NaN();
      out[l].ok = false;
    }
  }
  return out;
}

std::size_t profile_argmin(const std::vector<ProfilePoint>& profile) {
  std::size_t best = profile.size();
  for (std::size_t l = 0; l < profile.size(); ++l) {
    if (!profile[l].ok) continue;
    if (best == profile.size() || profile[l].criterion < profile[best].criterion) best = l;
  }
  if (best == profile.size()) throw EstimationError("every grid point is rank deficient");
  return best;
}

// ---------------------------------------------------------------------------
// Fits
// ---------------------------------------------------------------------------

GmmFit fit_profiled(const MomentSystem& sys, const GridMoments& gm, Restriction r, const GmmConfig& cfg,
                    const std::optional<MatrixXd>& weight) {
  const int p = sys.p();
  if (sys.k() < 2 * p + 2)
    throw EstimationError("order condition fails: k = " + std::to_string(sys.k()) + " < 2p+2 = " +
                          std::to_string(2 * p + 2));
  GmmFit fit;
  fit.n = sys.n();
  fit.k = sys.k();
  if (sys.n() <= sys.k())
    fit.warnings.push_back("n = " + std::to_string(sys.n()) + " does not exceed k = " + std::to_string(sys.k()));

  auto point_params = [&](const ProfilePoint& pt) {
    return ThresholdParams::from_alpha(pt.alpha, r == Restriction::linear ? 0.0 : pt.gamma);
  };

  if (weight) {
    fit.W = *weight;
    fit.stage = Stage::second;
    fit.profile = profile_criterion(gm, r, fit.W, cfg.rank_tol);
  } else {
    const MatrixXd I = MatrixXd::Identity(sys.k(), sys.k());
    auto first = profile_criterion(gm, r, I, cfg.rank_tol);
    const auto& best1 = first[profile_argmin(first)];
    fit.theta_first = point_params(best1);
    // Moments fitted to rounding: there is no sampling variation left to weight.
    const VectorXd v = gm.v;
    const bool exact = best1.criterion <= 1e-24 * std::max(v.squaredNorm(), 1e-300);
    if (exact && cfg.two_stage)
      fit.warnings.push_back("first-stage moments vanish; second stage skipped");
    if (cfg.two_stage && !exact) {
      fit.W = weight_matrix(sys.unit_moments(best1.alpha, best1.gamma), cfg);
      fit.stage = Stage::second;
      fit.profile = profile_criterion(gm, r, fit.W, cfg.rank_tol);
    } else {
      fit.W = I;
      fit.stage = Stage::first;
      fit.profile = std::move(first);
    }
  }
  const auto& best = fit.profile[profile_argmin(fit.profile)];
  fit.criterion = best.criterion;
  fit.theta_hat = point_params(best);
  if (weight) fit.theta_first = fit.theta_hat;
  if (r == Restriction::continuity) {
    fit.kink = KinkParams{fit.theta_hat.beta, fit.theta_hat.delta(p), fit.theta_hat.gamma};
    fit.theta_hat = fit.kink->embed();
  }
  fit.residuals = sys.residuals(fit.theta_hat.alpha(), fit.theta_hat.gamma);
  const MatrixXd g = sys.unit_moments_from_residuals(fit.residuals);
  fit.omega_hat = centered_covariance(g);
  fit.g_bar_hat = g.colwise().mean().transpose();
  return fit;
}

GmmFit fit_unrestricted(const MomentSystem& sys, const GammaGrid& grid, const GmmConfig& cfg) {
  if (grid.points.empty()) throw EstimationError("empty threshold grid");
  auto fit = fit_profiled(sys, grid_moments(sys, grid.points), Restriction::none, cfg);
  fit.kind = FitKind::unrestricted;
  return fit;
}

GmmFit fit_unrestricted(const PanelDataset& panel, const InstrumentSpec& spec, const GammaGrid& grid,
                        const GmmConfig& cfg) {
  return fit_unrestricted(MomentSystem::build(panel, spec), grid, cfg);
}

GmmFit fit_gamma_restricted(const MomentSystem& sys, double gamma, const GmmConfig& cfg,
                            const std::optional<MatrixXd>& weight) {
  const std::vector<double> pt{gamma};
  GmmFit fit;
  try {
    fit = fit_profiled(sys, grid_moments(sys, pt), Restriction::none, cfg, weight);
  } catch (const EstimationError&) {
    if (sys.k() < 2 * sys.p() + 2) throw;
    std::ostringstream msg;
    msg << "weighted moment Jacobian is rank deficient at gamma = " << gamma;
    throw RankError(msg.str(), gamma);
  }
  fit.kind = FitKind::gamma_restricted;
  return fit;
}

GmmFit fit_continuity_restricted(const MomentSystem& sys, const GammaGrid& grid, const GmmConfig& cfg,
                                 const std::optional<MatrixXd>& weight) {
  if (grid.points.empty()) throw EstimationError("empty threshold grid");
  auto fit = fit_profiled(sys, grid_moments(sys, grid.points), Restriction::continuity, cfg, weight);
  fit.kind = FitKind::continuity_restricted;
  return fit;
}

GmmFit fit_linear_null(const MomentSystem& sys, const GmmConfig& cfg) {
  const std::vector<double> pt{0.0};
  auto fit = fit_profiled(sys, grid_moments(sys, pt), Restriction::linear, cfg);
  fit.kind = FitKind::linear_null;
  return fit;
}

}  // namespace dptr
