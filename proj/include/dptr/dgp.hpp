#pragma once

#include "dptr/panel.hpp"

#include <cstdint>

namespace dptr {

/// Simulation design
///   y_it = b2 y_{i,t-1} + b3 q_it + (d1 + d2 y_{i,t-1} + d3 q_it) 1{q_it > gamma} + eta_i + sigma e_it
///   q_it = rho q_{i,t-1} + u_it,   corr(e_it, u_{i,t+1}) = rho_eu.
struct DgpConfig {
  int n = 400;
  int T = 6;
  double beta2 = 0.6;
  double beta3 = 1.0;
  double delta1 = 0.5;
  double delta2 = 0.0;
  double delta3 = 2.0;
  double gamma = 0.25;
  double sigma = 0.5;
  double rho = 0.7;
  double rho_eu = 0.5;
  int burn_in = 100;
  double fixed_effect_sd = 0.0;

  /// Size of the discontinuity of the regression function at gamma (with delta2 = 0).
  double jump() const { return delta1 + delta3 * gamma; }
  /// Sets delta1 so that jump() equals `size`.
  void set_jump(double size) { delta1 = size - delta3 * gamma; }
  ThresholdParams theta() const;

  void validate() const;
};

/// Regression function m(ylag, q) without fixed effect and error.
double regression_function(const DgpConfig& cfg, double ylag, double q);

/// Balanced panel with x_it = (y_{i,t-1}, q_it), periods 1..T kept after the burn-in.
/// Each unit draws from its own stream, so units do not depend on n.
PanelDataset simulate_panel(const DgpConfig& cfg, std::uint64_t seed);

/// Innovations behind a simulated panel, exposed for distributional checks:
/// e(i, t) and u(i, t + 1) for the kept periods t = 1..T.
struct DgpInnovations {
  MatrixXd e;       // n x T
  MatrixXd u_next;  // n x T
};
PanelDataset simulate_panel(const DgpConfig& cfg, std::uint64_t seed, DgpInnovations* innovations);

}  // namespace dptr
