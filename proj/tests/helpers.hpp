#pragma once

#include "dptr/dgp.hpp"
#include "dptr/gmm.hpp"
#include "dptr/moment_system.hpp"
#include "dptr/panel.hpp"

#include <random>

namespace dptr::testing {

/// Monte Carlo design with the given jump size.
inline DgpConfig design(int n, double jump, double sigma = 0.5) {
  DgpConfig c;
  c.n = n;
  c.sigma = sigma;
  c.set_jump(jump);
  return c;
}

inline MomentSystem standard_system(const PanelDataset& panel) {
  return MomentSystem::build(panel, InstrumentSpec::standard());
}

/// The seed-1 reference dataset (n = 400, jump = 1).
inline const PanelDataset& seed1_panel() {
  static const PanelDataset panel = simulate_panel(design(400, 1.0), 1);
  return panel;
}

inline ThresholdParams random_params(std::mt19937_64& rng, int p, double gamma_lo = -1.0, double gamma_hi = 1.0) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(gamma_lo, gamma_hi);
  ThresholdParams t;
  t.beta = VectorXd(p);
  t.delta = VectorXd(p + 1);
  for (int j = 0; j < p; ++j) t.beta(j) = normal(rng);
  for (int j = 0; j <= p; ++j) t.delta(j) = normal(rng);
  t.gamma = unif(rng);
  return t;
}

inline double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace dptr::testing
