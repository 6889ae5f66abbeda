#pragma once

#include "dptr/panel.hpp"

#include <span>
#include <vector>

namespace dptr {

/// Data for one moment period t in t0..T, rows indexed by unit.
struct MomentBlock {
  int t = 0;
  int offset = 0;     // first stacked row of this block
  MatrixXd z;         // n x dim_t
  VectorXd dy;        // n
  MatrixXd dx;        // n x p
  MatrixXd lev_cur;   // n x (p+1), rows (1, x_it')
  MatrixXd lev_prev;  // n x (p+1), rows (1, x_{i,t-1}')

  int dim() const { return static_cast<int>(z.cols()); }
  auto q_cur() const { return lev_cur.col(lev_cur.cols() - 1); }
  auto q_prev() const { return lev_prev.col(lev_prev.cols() - 1); }
};

/// Differenced panel bound to its instruments: everything needed to evaluate the
/// stacked moment vector g_i(theta) = v_i + M_i(gamma) alpha for t = t0..T.
///
/// `recenter` is subtracted from the sample mean of the moments. It is zero for
/// the original sample and equals g_bar_n(theta_hat) in bootstrap worlds.
class MomentSystem {
 public:
  static MomentSystem build(const DiffPanel& diff, const InstrumentSet& iv);
  static MomentSystem build(const PanelDataset& panel, const InstrumentSpec& spec);

  int n() const { return n_; }
  int p() const { return p_; }
  int k() const { return k_; }
  int periods() const { return static_cast<int>(blocks_.size()); }
  int n_coef() const { return 2 * p_ + 1; }
  const std::vector<MomentBlock>& blocks() const { return blocks_; }
  std::vector<MomentBlock>& mutable_blocks() { return blocks_; }

  const VectorXd& recenter() const { return recenter_; }
  void set_recenter(VectorXd r);

  /// (1/n) sum_i z_i dy_i minus the recentering vector.
  VectorXd v_bar() const;
  MatrixXd m1_bar() const;
  MatrixXd m2_bar(double gamma) const;
  MatrixXd m_bar(double gamma) const;

  /// Regressor rows h_it(gamma) = (dx_it', 1_it(gamma)' X_it) of block b.
  MatrixXd regressors(int b, double gamma) const;
  /// n x periods matrix of dy_it - h_it(gamma)' alpha.
  MatrixXd residuals(const VectorXd& alpha, double gamma) const;
  /// n x k matrix of g_i(alpha, gamma), not recentered.
  MatrixXd unit_moments(const VectorXd& alpha, double gamma) const;
  /// n x k matrix of z_it * e_it for a given n x periods residual matrix.
  MatrixXd unit_moments_from_residuals(const MatrixXd& resid) const;

  /// Copy whose unit i is the original unit index[i].
  MomentSystem resample(std::span<const int> index) const;
  void scale_instruments(double c);

  /// Pooled threshold values entering the indicators of this system.
  std::vector<double> threshold_sample() const;

 private:
  int n_ = 0;
  int p_ = 0;
  int k_ = 0;
  std::vector<MomentBlock> blocks_;
  VectorXd recenter_;
};

/// v_bar, M1_bar and M2_bar(gamma_l) for every point of a sorted grid, computed in
/// one pass over the units: each unit's z (1, x') outer product is added to the
/// bucket of grid cells below its threshold value and the buckets are summed from
/// the right.
struct GridMoments {
  std::vector<double> gamma;
  VectorXd v;
  MatrixXd m1;
  std::vector<MatrixXd> m2;

  std::size_t size() const { return gamma.size(); }
  MatrixXd m(std::size_t l) const;
};

GridMoments grid_moments(const MomentSystem& sys, std::span<const double> grid);

}  // namespace dptr
