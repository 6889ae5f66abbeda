#include "dptr/moment_system.hpp"

#include "dptr/errors.hpp"

#include <algorithm>

namespace dptr {

MomentSystem MomentSystem::build(const DiffPanel& diff, const InstrumentSet& iv) {
  if (iv.T != diff.T || iv.z.empty() || iv.z.front().rows() != diff.n)
    throw DimensionError("instrument set does not match the differenced panel");
  MomentSystem sys;
  sys.n_ = diff.n;
  sys.p_ = diff.p;
  sys.k_ = iv.k;
  for (int t = iv.t0; t <= iv.T; ++t) {
    const auto& per = diff.at(t);
    const auto idx = static_cast<std::size_t>(t - iv.t0);
    sys.blocks_.push_back(MomentBlock{t, iv.offsets[idx], iv.z[idx], per.dy, per.dx, per.lev_cur, per.lev_prev});
  }
  sys.recenter_ = VectorXd::Zero(sys.k_);
  return sys;
}

MomentSystem MomentSystem::build(const PanelDataset& panel, const InstrumentSpec& spec) {
  return build(first_difference(panel), build_instruments(panel, spec));
}

void MomentSystem::set_recenter(VectorXd r) {
  if (r.size() != k_) throw DimensionError("recentering vector has wrong length");
  recenter_ = std::move(r);
}

VectorXd MomentSystem::v_bar() const {
  VectorXd v(k_);
  for (const auto& b : blocks_) v.segment(b.offset, b.dim()).noalias() = b.z.transpose() * b.dy;
  v /= n_;
  v -= recenter_;
  return v;
}

MatrixXd MomentSystem::m1_bar() const {
  MatrixXd m(k_, p_);
  for (const auto& b : blocks_) m.middleRows(b.offset, b.dim()).noalias() = -(b.z.transpose() * b.dx);
  return m / n_;
}

MatrixXd MomentSystem::m2_bar(double gamma) const {
  MatrixXd m(k_, p_ + 1);
  for (const auto& b : blocks_) {
    const VectorXd up = (b.q_cur().array() > gamma).cast<double>();
    const VectorXd up_prev = (b.q_prev().array() > gamma).cast<double>();
    const MatrixXd h = up.asDiagonal() * b.lev_cur - up_prev.asDiagonal() * b.lev_prev;
    m.middleRows(b.offset, b.dim()).noalias() = -(b.z.transpose() * h);
  }
  return m / n_;
}

MatrixXd MomentSystem::m_bar(double gamma) const {
  MatrixXd m(k_, 2 * p_ + 1);
  m << m1_bar(), m2_bar(gamma);
  return m;
}

MatrixXd MomentSystem::regressors(int bi, double gamma) const {
  const auto& b = blocks_.at(static_cast<std::size_t>(bi));
  MatrixXd h(n_, 2 * p_ + 1);
  h.leftCols(p_) = b.dx;
  for (int i = 0; i < n_; ++i) {
    const double up = b.q_cur()(i) > gamma ? 1.0 : 0.0;
    const double up_prev = b.q_prev()(i) > gamma ? 1.0 : 0.0;
    h.row(i).tail(p_ + 1) = up * b.lev_cur.row(i) - up_prev * b.lev_prev.row(i);
  }
  return h;
}

MatrixXd MomentSystem::residuals(const VectorXd& alpha, double gamma) const {
  if (alpha.size() != 2 * p_ + 1) throw DimensionError("alpha must have length 2p+1");
  MatrixXd e(n_, periods());
  for (int b = 0; b < periods(); ++b)
    e.col(b) = blocks_[static_cast<std::size_t>(b)].dy - regressors(b, gamma) * alpha;
  return e;
}

MatrixXd MomentSystem::unit_moments_from_residuals(const MatrixXd& resid) const {
  MatrixXd g(n_, k_);
  for (int b = 0; b < periods(); ++b) {
    const auto& blk = blocks_[static_cast<std::size_t>(b)];
    g.middleCols(blk.offset, blk.dim()) = resid.col(b).asDiagonal() * blk.z;
  }
  return g;
}

MatrixXd MomentSystem::unit_moments(const VectorXd& alpha, double gamma) const {
  return unit_moments_from_residuals(residuals(alpha, gamma));
}

MomentSystem MomentSystem::resample(std::span<const int> index) const {
  if (static_cast<int>(index.size()) != n_) throw DimensionError("resampling index must have n entries");
  MomentSystem out;
  out.n_ = n_;
  out.p_ = p_;
  out.k_ = k_;
  out.recenter_ = recenter_;
  out.blocks_.reserve(blocks_.size());
  const Eigen::Map<const Eigen::VectorXi> idx(index.data(), n_);
  for (const auto& b : blocks_) {
    out.blocks_.push_back(MomentBlock{b.t, b.offset, b.z(idx, Eigen::all), b.dy(idx),
                                      b.dx(idx, Eigen::all), b.lev_cur(idx, Eigen::all),
                                      b.lev_prev(idx, Eigen::all)});
  }
  return out;
}

void MomentSystem::scale_instruments(double c) {
  for (auto& b : blocks_) b.z *= c;
  recenter_ *= c;
}

std::vector<double> MomentSystem::threshold_sample() const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(2 * n_ * periods()));
  for (const auto& b : blocks_)
    for (int i = 0; i < n_; ++i) {
      out.push_back(b.q_cur()(i));
      out.push_back(b.q_prev()(i));
    }
  return out;
}

MatrixXd GridMoments::m(std::size_t l) const {
  MatrixXd out(m1.rows(), m1.cols() + m2.at(l).cols());
  out << m1, m2[l];
  return out;
}

GridMoments grid_moments(const MomentSystem& sys, std::span<const double> grid) {
  if (!std::is_sorted(grid.begin(), grid.end())) throw DimensionError("grid must be sorted");
  const int n = sys.n();
  const int p = sys.p();
  const std::size_t L = grid.size();
  GridMoments gm;
  gm.gamma.assign(grid.begin(), grid.end());
  gm.v = sys.v_bar();
  gm.m1 = sys.m1_bar();
  gm.m2.assign(L, MatrixXd::Zero(sys.k(), p + 1));

  // cell(q) = #{l : gamma_l < q}; a unit is in the upper regime at gamma_l iff l < cell(q).
  auto cell = [&](double q) {
    return static_cast<std::size_t>(std::lower_bound(grid.begin(), grid.end(), q) - grid.begin());
  };
  std::vector<MatrixXd> bucket(L + 1);
  for (const auto& b : sys.blocks()) {
    const int d = b.dim();
    for (auto& m : bucket) m.setZero(d, p + 1);
    for (int i = 0; i < n; ++i) {
      const std::size_t c_cur = cell(b.q_cur()(i));
      const std::size_t c_prev = cell(b.q_prev()(i));
      if (c_cur > 0) bucket[c_cur].noalias() += b.z.row(i).transpose() * b.lev_cur.row(i);
      if (c_prev > 0) bucket[c_prev].noalias() -= b.z.row(i).transpose() * b.lev_prev.row(i);
    }
    MatrixXd running = MatrixXd::Zero(d, p + 1);
    for (std::size_t l = L; l-- > 0;) {
      running += bucket[l + 1];
      gm.m2[l].middleRows(b.offset, d) = running;
    }
  }
  const double scale = -1.0 / n;
  for (auto& m : gm.m2) m *= scale;
  return gm;
}

}  // namespace dptr
