#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dptr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Levels data
// ---------------------------------------------------------------------------

/// Balanced panel in levels. Periods are indexed 1..T in the documentation and
/// 0..T-1 in storage. The last regressor is the threshold variable q.
struct PanelDataset {
  MatrixXd y;                        // n x T
  std::vector<MatrixXd> x;           // p matrices, each n x T
  std::vector<std::string> unit_ids;
  std::vector<long> times;
  std::vector<std::string> x_names;  // x_names.back() names the threshold variable
  std::string y_name = "y";

  int n() const { return static_cast<int>(y.rows()); }
  int T() const { return static_cast<int>(y.cols()); }
  int p() const { return static_cast<int>(x.size()); }
  const MatrixXd& q() const { return x.back(); }

  /// Throws DimensionError/DataError if shapes disagree or values are not finite.
  void validate() const;
};

/// Full parameter point (beta', delta', gamma)' with delta = (delta1, delta2', delta3)'.
struct ThresholdParams {
  VectorXd beta;   // p
  VectorXd delta;  // p + 1
  double gamma = 0.0;

  int p() const { return static_cast<int>(beta.size()); }
  VectorXd alpha() const;
  /// (beta', delta', gamma)' as one vector of length 2p + 2.
  VectorXd stacked() const;
  static ThresholdParams from_alpha(const VectorXd& alpha, double gamma);
  static ThresholdParams from_stacked(const VectorXd& v);
};

/// Column mapping for long-format CSV ingestion.
struct PanelSchema {
  std::string unit_column = "unit";
  std::string time_column = "time";
  std::string y_column = "y";
  std::string threshold_column;  // required
};

/// Reads `unit,time,y,<x...>` rows. The threshold column is moved to the last
/// regressor position and rows are sorted by (unit, time).
PanelDataset load_panel(std::istream& in, const PanelSchema& schema);
PanelDataset load_panel_file(const std::string& path, const PanelSchema& schema);

/// Writes the long format read by load_panel, with 17 significant digits.
void write_panel_csv(std::ostream& out, const PanelDataset& panel);

// ---------------------------------------------------------------------------
// First differences
// ---------------------------------------------------------------------------

/// One differenced period t (levels index, 2..T).
struct DiffPeriod {
  int t = 0;
  VectorXd dy;        // n
  MatrixXd dx;        // n x p
  MatrixXd lev_cur;   // n x (p+1): rows (1, x_it')
  MatrixXd lev_prev;  // n x (p+1): rows (1, x_{i,t-1}')

  auto q_cur() const { return lev_cur.col(lev_cur.cols() - 1); }
  auto q_prev() const { return lev_prev.col(lev_prev.cols() - 1); }
};

struct DiffPanel {
  int n = 0;
  int T = 0;
  int p = 0;
  std::vector<DiffPeriod> periods;  // t = 2..T

  const DiffPeriod& at(int t) const { return periods.at(static_cast<std::size_t>(t - 2)); }
  /// n x (T-1) matrix of dy_it, column j holding t = j + 2.
  MatrixXd dy() const;
  /// Regime indicator pair (1{q_it > gamma}, 1{q_{i,t-1} > gamma}).
  std::pair<bool, bool> indicator(int i, int t, double gamma) const;
};

DiffPanel first_difference(const PanelDataset& panel);

// ---------------------------------------------------------------------------
// Instruments
// ---------------------------------------------------------------------------

/// Lags first..last of one variable are used at every period t. An empty `last`
/// means "back to period 1" (i.e. last = t - 1).
struct LagRule {
  std::string variable;  // "y", "q" (threshold alias) or a regressor name
  int first = 1;
  std::optional<int> last;
};

struct InstrumentSpec {
  int t0 = 3;
  std::vector<LagRule> rules;

  /// z_it = (y_{t-2},...,y_1, q_{t-1},...,q_1)'.
  static InstrumentSpec standard(int t0 = 3);
  static InstrumentSpec y_lags_only(int t0 = 3);
};

struct InstrumentSet {
  int t0 = 3;
  int T = 0;
  int k = 0;
  std::vector<MatrixXd> z;               // per t = t0..T, n x dim_t
  std::vector<int> offsets;              // start row of block t in the stacked vector
  std::vector<std::string> labels;       // k labels such as "y[t-2]"

  int periods() const { return T - t0 + 1; }
  int dim(int t) const { return static_cast<int>(z.at(static_cast<std::size_t>(t - t0)).cols()); }
  bool satisfies_order_condition(int p) const { return k >= 2 * p + 2; }
};

InstrumentSet build_instruments(const PanelDataset& panel, const InstrumentSpec& spec);

/// Closed form of the instrument count for y lags 2.. back to period 1 with t0 = 3.
constexpr int y_lag_instrument_count(int T) { return (T - 1) * (T - 2) / 2; }

// ---------------------------------------------------------------------------
// Moment evaluation
// ---------------------------------------------------------------------------

struct MomentEvaluation {
  VectorXd g_bar;    // k
  MatrixXd g_units;  // n x k
  MatrixXd M_bar;    // k x (2p+1), [M1 | M2(gamma)]
  VectorXd v_n;      // k
};

/// Direct unit-by-unit evaluation of g_i(theta), its mean, and the linear
/// decomposition g_bar = v_n + M_bar * alpha.
MomentEvaluation moment_eval(const DiffPanel& diff, const InstrumentSet& iv,
                             const ThresholdParams& theta);

/// q values entering the regime indicators (periods t0-1..T), pooled over units.
std::vector<double> pooled_threshold_sample(const PanelDataset& panel, int t0);

}  // namespace dptr
