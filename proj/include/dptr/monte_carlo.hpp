#pragma once

#include "dptr/bootstrap.hpp"
#include "dptr/dgp.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace dptr {

/// Quantile grid rule applied to each simulated sample.
struct GridRule {
  double lo = 0.1;
  double hi = 0.9;
  int count = 21;
};

/// What each Monte Carlo replicate computes.
struct McTargets {
  bool grid_coverage = true;          // grid-bootstrap test of gamma0 (Table 1, Grid-B)
  bool threshold_np = true;           // NP-B and NP-B(S) intervals for gamma (Tables 1-2)
  std::vector<double> power_offsets;  // tests of gamma0 + c (Table 2)
  bool coefficients = false;          // R-B, R-B(S), NP-B, NP-B(S) for beta, delta (Tables 3-4)
  bool continuity_test = false;
  bool linearity_test = false;
  bool distance_null = false;         // record D_n(gamma0) only
  bool full_grid_ci = false;          // raw and convexified grid-bootstrap set over the whole grid
};

struct McConfig {
  DgpConfig dgp;
  int reps = 200;
  std::uint64_t seed = 1;
  int workers = 1;
  BootstrapConfig bootstrap;
  GridRule grid;
  InstrumentSpec iv = InstrumentSpec::standard();
  McTargets targets;

  void validate() const;
};

/// Outcome of one replicate. Rate fields are 1/0 indicators, NaN when not computed.
struct McRecord {
  int rep = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;

  double gamma_hat = 0.0;
  double D_n0 = 0.0;
  double grid_cover = 0.0;
  double grid_cover_raw_full = 0.0;
  double grid_cover_convex_full = 0.0;
  double grid_length_convex = 0.0;
  double np_cover = 0.0;
  double nps_cover = 0.0;
  std::vector<double> grid_reject;  // per power offset
  std::vector<double> np_reject;
  std::vector<double> nps_reject;
  // coefficient methods x components (beta..., delta...): coverage and length
  std::vector<std::vector<double>> coef_cover;
  std::vector<std::vector<double>> coef_length;
  double w_n = 0.0;
  double continuity_T = 0.0;
  double continuity_p = 0.0;
  double continuity_reject = 0.0;
  double supwald = 0.0;
  double linearity_p = 0.0;
  double linearity_reject = 0.0;
};

/// Coefficient interval methods in the order used by McRecord::coef_cover.
enum class CoefMethod { rb = 0, rbs = 1, npb = 2, npbs = 3 };
const char* to_string(CoefMethod m);
constexpr int kCoefMethods = 4;

struct McResult {
  McConfig config;
  std::vector<McRecord> records;
  int failures = 0;
  double wall_seconds = 0.0;
  std::vector<std::string> coef_names;

  int used() const { return static_cast<int>(records.size()) - failures; }
  /// Mean of a per-record indicator over non-failed replicates.
  double rate(const std::function<double(const McRecord&)>& field) const;
};

/// Hooks that replace individual inference steps; used to check the harness plumbing.
struct McHooks {
  /// Accept/reject decision of the grid-bootstrap test of `gamma`; replaces the bootstrap.
  std::function<bool(const MomentSystem&, const GmmFit&, const GammaGrid&, double gamma)> grid_accept;
};

/// Rough single-worker runtime estimate in seconds.
double estimate_mc_seconds(const McConfig& cfg);

McResult run_mc(const McConfig& cfg, const McHooks& hooks = {}, std::ostream* log = nullptr);

/// Writes table1_threshold_coverage.csv, table2_power.csv, table3_coef_coverage.csv,
/// table4_length_ratio.csv, tests.csv and replicates.csv (whichever apply).
/// Returns the written file names.
std::vector<std::string> write_mc_tables(const McResult& result, const std::filesystem::path& dir);

}  // namespace dptr
