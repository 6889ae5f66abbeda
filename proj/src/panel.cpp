#include "dptr/panel.hpp"

#include "dptr/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace dptr {

void PanelDataset::validate() const {
  if (x.empty()) throw DimensionError("panel needs at least one regressor (the threshold variable)");
  if (static_cast<int>(unit_ids.size()) != n())
    throw DimensionError("unit_ids size does not match y rows");
  if (!times.empty() && static_cast<int>(times.size()) != T())
    throw DimensionError("times size does not match y columns");
  if (static_cast<int>(x_names.size()) != p())
    throw DimensionError("x_names size does not match the number of regressors");
  for (const auto& xj : x)
    if (xj.rows() != y.rows() || xj.cols() != y.cols())
      throw DimensionError("regressor matrix shape differs from y");
  if (!y.allFinite()) throw DataError("y contains non-finite values");
  for (const auto& xj : x)
    if (!xj.allFinite()) throw DataError("x contains non-finite values");
}

VectorXd ThresholdParams::alpha() const {
  VectorXd a(beta.size() + delta.size());
  a << beta, delta;
  return a;
}

VectorXd ThresholdParams::stacked() const {
  VectorXd v(beta.size() + delta.size() + 1);
  v << beta, delta, gamma;
  return v;
}

ThresholdParams ThresholdParams::from_alpha(const VectorXd& alpha, double gamma) {
  if (alpha.size() < 3 || alpha.size() % 2 == 0)
    throw DimensionError("alpha must have length 2p+1");
  const Eigen::Index p = (alpha.size() - 1) / 2;
  return ThresholdParams{alpha.head(p), alpha.tail(p + 1), gamma};
}

ThresholdParams ThresholdParams::from_stacked(const VectorXd& v) {
  if (v.size() < 4) throw DimensionError("parameter vector must have length 2p+2");
  return from_alpha(v.head(v.size() - 1), v(v.size() - 1));
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string{} : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_double(const std::string& field, long row, const std::string& column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || field.empty())
    throw DataError("row " + std::to_string(row) + ": column '" + column +
                    "' is not numeric: '" + field + "'");
  return v;
}

long parse_long(const std::string& field, long row, const std::string& column) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty())
    throw DataError("row " + std::to_string(row) + ": column '" + column +
                    "' is not an integer: '" + field + "'");
  return v;
}

// Numeric ids sort numerically, everything else lexicographically.
bool unit_less(const std::string& a, const std::string& b) {
  long la = 0, lb = 0;
  auto ra = std::from_chars(a.data(), a.data() + a.size(), la);
  auto rb = std::from_chars(b.data(), b.data() + b.size(), lb);
  const bool na = ra.ec == std::errc{} && ra.ptr == a.data() + a.size();
  const bool nb = rb.ec == std::errc{} && rb.ptr == b.data() + b.size();
  if (na && nb) return la < lb;
  if (na != nb) return na;
  return a < b;
}

}  // namespace

PanelDataset load_panel(std::istream& in, const PanelSchema& schema) {
  if (schema.threshold_column.empty()) throw DataError("schema does not name a threshold column");
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input: missing header");
  const auto header = split_csv_line(line);

  auto find_col = [&](const std::string& name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("header has no column '" + name + "'");
    return static_cast<int>(it - header.begin());
  };
  const int unit_col = find_col(schema.unit_column);
  const int time_col = find_col(schema.time_column);
  const int y_col = find_col(schema.y_column);
  const int q_col = find_col(schema.threshold_column);

  std::vector<int> x_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c)
    if (c != unit_col && c != time_col && c != y_col && c != q_col) x_cols.push_back(c);
  x_cols.push_back(q_col);
  const int p = static_cast<int>(x_cols.size());

  struct Row {
    double y;
    std::vector<double> x;
  };
  std::map<std::string, std::map<long, Row>, decltype(&unit_less)> cells(&unit_less);
  std::set<long> all_times;

  long row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw DataError("row " + std::to_string(row_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(f.size()));
    const std::string& unit = f[static_cast<std::size_t>(unit_col)];
    const long t = parse_long(f[static_cast<std::size_t>(time_col)], row_no, schema.time_column);
    Row r;
    r.y = parse_double(f[static_cast<std::size_t>(y_col)], row_no, schema.y_column);
    r.x.reserve(static_cast<std::size_t>(p));
    for (int c : x_cols)
      r.x.push_back(parse_double(f[static_cast<std::size_t>(c)], row_no,
                                 header[static_cast<std::size_t>(c)]));
    auto& unit_rows = cells[unit];
    if (!unit_rows.emplace(t, std::move(r)).second)
      throw DataError("row " + std::to_string(row_no) + ": duplicate (unit, time) = (" + unit +
                      ", " + std::to_string(t) + ")");
    all_times.insert(t);
  }
  if (cells.empty()) throw DataError("no data rows");

  std::vector<std::string> missing;
  for (const auto& [unit, rows] : cells)
    for (long t : all_times)
      if (!rows.count(t)) missing.push_back("(" + unit + ", " + std::to_string(t) + ")");
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "unbalanced panel: " << missing.size() << " missing (unit, time) cell(s):";
    for (std::size_t j = 0; j < missing.size() && j < 20; ++j) msg << ' ' << missing[j];
    if (missing.size() > 20) msg << " ...";
    throw DataError(msg.str());
  }

  const int n = static_cast<int>(cells.size());
  const int T = static_cast<int>(all_times.size());
  PanelDataset panel;
  panel.y_name = schema.y_column;
  panel.y.resize(n, T);
  panel.x.assign(static_cast<std::size_t>(p), MatrixXd(n, T));
  panel.times.assign(all_times.begin(), all_times.end());
  for (int c : x_cols) panel.x_names.push_back(header[static_cast<std::size_t>(c)]);
  int i = 0;
  for (const auto& [unit, rows] : cells) {
    panel.unit_ids.push_back(unit);
    int t = 0;
    for (const auto& [time, r] : rows) {
      panel.y(i, t) = r.y;
      for (int j = 0; j < p; ++j) panel.x[static_cast<std::size_t>(j)](i, t) = r.x[static_cast<std::size_t>(j)];
      ++t;
    }
    ++i;
  }
  panel.validate();
  return panel;
}

PanelDataset load_panel_file(const std::string& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return load_panel(in, schema);
}

void write_panel_csv(std::ostream& out, const PanelDataset& panel) {
  panel.validate();
  out << "unit,time," << panel.y_name;
  for (const auto& name : panel.x_names) out << ',' << name;
  out << '\n';
  out << std::setprecision(17);
  for (int i = 0; i < panel.n(); ++i) {
    for (int t = 0; t < panel.T(); ++t) {
      const long time = panel.times.empty() ? t + 1 : panel.times[static_cast<std::size_t>(t)];
      out << panel.unit_ids[static_cast<std::size_t>(i)] << ',' << time << ',' << panel.y(i, t);
      for (const auto& xj : panel.x) out << ',' << xj(i, t);
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Differencing and instruments
// ---------------------------------------------------------------------------

MatrixXd DiffPanel::dy() const {
  MatrixXd out(n, static_cast<Eigen::Index>(periods.size()));
  for (std::size_t j = 0; j < periods.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = periods[j].dy;
  return out;
}

std::pair<bool, bool> DiffPanel::indicator(int i, int t, double gamma) const {
  const auto& d = at(t);
  return {d.q_cur()(i) > gamma, d.q_prev()(i) > gamma};
}

DiffPanel first_difference(const PanelDataset& panel) {
  panel.validate();
  if (panel.T() < 2) throw DimensionError("first differencing needs T >= 2, got T = " + std::to_string(panel.T()));
  DiffPanel d;
  d.n = panel.n();
  d.T = panel.T();
  d.p = panel.p();
  for (int t = 2; t <= d.T; ++t) {
    const int c = t - 1;  // storage column of period t
    DiffPeriod per;
    per.t = t;
    per.dy = panel.y.col(c) - panel.y.col(c - 1);
    per.dx.resize(d.n, d.p);
    per.lev_cur.resize(d.n, d.p + 1);
    per.lev_prev.resize(d.n, d.p + 1);
    per.lev_cur.col(0).setOnes();
    per.lev_prev.col(0).setOnes();
    for (int j = 0; j < d.p; ++j) {
      const auto& xj = panel.x[static_cast<std::size_t>(j)];
      per.dx.col(j) = xj.col(c) - xj.col(c - 1);
      per.lev_cur.col(j + 1) = xj.col(c);
      per.lev_prev.col(j + 1) = xj.col(c - 1);
    }
    d.periods.push_back(std::move(per));
  }
  return d;
}

InstrumentSpec InstrumentSpec::standard(int t0) {
  return InstrumentSpec{t0, {LagRule{"y", 2, std::nullopt}, LagRule{"q", 1, std::nullopt}}};
}

InstrumentSpec InstrumentSpec::y_lags_only(int t0) {
  return InstrumentSpec{t0, {LagRule{"y", 2, std::nullopt}}};
}

InstrumentSet build_instruments(const PanelDataset& panel, const InstrumentSpec& spec) {
  panel.validate();
  if (spec.t0 < 2) throw SpecError("t0 must be at least 2, got " + std::to_string(spec.t0));
  if (panel.T() < spec.t0)
    throw SpecError("panel has T = " + std::to_string(panel.T()) + " < t0 = " + std::to_string(spec.t0));
  if (spec.rules.empty()) throw SpecError("instrument specification has no lag rules");

  // y rules first, then the threshold variable, then other regressors in column order.
  struct Source {
    const MatrixXd* data;
    std::string name;
    LagRule rule;
  };
  std::vector<Source> sources;
  const std::string& q_name = panel.x_names.back();
  auto rank_of = [&](const LagRule& r) -> int {
    if (r.variable == "y" || r.variable == panel.y_name) return -2;
    if (r.variable == "q" || r.variable == q_name) return -1;
    auto it = std::find(panel.x_names.begin(), panel.x_names.end(), r.variable);
    if (it == panel.x_names.end()) throw SpecError("instrument variable '" + r.variable + "' is not in the panel");
    return static_cast<int>(it - panel.x_names.begin());
  };
  std::vector<std::pair<int, LagRule>> ranked;
  for (const auto& r : spec.rules) {
    if (r.first < 0) throw SpecError("negative lag for '" + r.variable + "'");
    if (r.last && *r.last < r.first) throw SpecError("empty lag range for '" + r.variable + "'");
    ranked.emplace_back(rank_of(r), r);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [rank, r] : ranked) {
    if (rank == -2) sources.push_back({&panel.y, "y", r});
    else if (rank == -1) sources.push_back({&panel.x.back(), q_name, r});
    else sources.push_back({&panel.x[static_cast<std::size_t>(rank)], panel.x_names[static_cast<std::size_t>(rank)], r});
  }

  InstrumentSet iv;
  iv.t0 = spec.t0;
  iv.T = panel.T();
  const int n = panel.n();
  for (int t = spec.t0; t <= panel.T(); ++t) {
    std::vector<std::pair<const MatrixXd*, int>> cols;  // (source, levels period)
    for (const auto& s : sources) {
      const int last = s.rule.last.value_or(std::max(t - 1, s.rule.first));
      for (int lag = s.rule.first; lag <= last; ++lag) {
        const int period = t - lag;
        if (period < 1)
          throw SpecError("instrument " + s.name + " lag " + std::to_string(lag) + " at t = " +
                          std::to_string(t) + " references period " + std::to_string(period) + " < 1");
        cols.emplace_back(s.data, period);
      }
    }
    MatrixXd z(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      z.col(static_cast<Eigen::Index>(c)) = cols[c].first->col(cols[c].second - 1);
    iv.offsets.push_back(iv.k);
    iv.k += static_cast<int>(cols.size());
    iv.z.push_back(std::move(z));
  }
  // Labels in the same order as the stacked vector.
  for (int t = spec.t0; t <= panel.T(); ++t)
    for (const auto& s : sources) {
      const int last = s.rule.last.value_or(std::max(t - 1, s.rule.first));
      for (int lag = s.rule.first; lag <= last; ++lag)
        iv.labels.push_back(s.name + "[" + std::to_string(t - lag) + "]@t" + std::to_string(t));
    }
  return iv;
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

MomentEvaluation moment_eval(const DiffPanel& diff, const InstrumentSet& iv,
                             const ThresholdParams& theta) {
  const int n = diff.n;
  const int p = diff.p;
  if (theta.p() != p || theta.delta.size() != p + 1)
    throw DimensionError("parameter dimension does not match the panel (p = " + std::to_string(p) + ")");
  if (iv.T != diff.T || iv.z.empty() || iv.z.front().rows() != n)
    throw DimensionError("instrument set does not match the differenced panel");

  MomentEvaluation ev;
  ev.g_units.setZero(n, iv.k);
  ev.M_bar.setZero(iv.k, 2 * p + 1);
  ev.v_n.setZero(iv.k);
  const double inv_n = 1.0 / n;
  const VectorXd alpha = theta.alpha();

  for (int t = iv.t0; t <= iv.T; ++t) {
    const auto& per = diff.at(t);
    const MatrixXd& z = iv.z[static_cast<std::size_t>(t - iv.t0)];
    const int off = iv.offsets[static_cast<std::size_t>(t - iv.t0)];
    for (int i = 0; i < n; ++i) {
      // regressor row h_it(gamma) = (dx_it', 1_it(gamma)' X_it)
      VectorXd h(2 * p + 1);
      h.head(p) = per.dx.row(i).transpose();
      const double up = per.q_cur()(i) > theta.gamma ? 1.0 : 0.0;
      const double up_prev = per.q_prev()(i) > theta.gamma ? 1.0 : 0.0;
      h.tail(p + 1) = up * per.lev_cur.row(i).transpose() - up_prev * per.lev_prev.row(i).transpose();
      const double resid = per.dy(i) - h.dot(alpha);
      for (int r = 0; r < z.cols(); ++r) {
        const double zr = z(i, r);
        ev.g_units(i, off + r) = zr * resid;
        ev.v_n(off + r) += inv_n * zr * per.dy(i);
        ev.M_bar.row(off + r) -= inv_n * zr * h.transpose();
      }
    }
  }
  ev.g_bar = ev.g_units.colwise().mean().transpose();
  return ev;
}

std::vector<double> pooled_threshold_sample(const PanelDataset& panel, int t0) {
  std::vector<double> out;
  const int first = std::max(1, t0 - 1);
  for (int t = first; t <= panel.T(); ++t)
    for (int i = 0; i < panel.n(); ++i) out.push_back(panel.q()(i, t - 1));
  return out;
}

}  // namespace dptr
