#include "dptr/dgp.hpp"

#include "dptr/errors.hpp"
#include "dptr/random.hpp"

#include <cmath>
#include <string>

namespace dptr {

ThresholdParams DgpConfig::theta() const {
  ThresholdParams t;
  t.beta = VectorXd(2);
  t.beta << beta2, beta3;
  t.delta = VectorXd(3);
  t.delta << delta1, delta2, delta3;
  t.gamma = gamma;
  return t;
}

void DgpConfig::validate() const {
  if (n < 1) throw SpecError("n must be positive");
  if (T < 2) throw SpecError("T must be at least 2");
  if (!(std::abs(rho) < 1.0)) throw SpecError("|rho| must be below 1");
  if (!(std::abs(rho_eu) <= 1.0)) throw SpecError("|rho_eu| must not exceed 1");
  if (!(sigma >= 0.0)) throw SpecError("sigma must be non-negative");
  if (burn_in < 0) throw SpecError("burn_in must be non-negative");
  if (!(fixed_effect_sd >= 0.0)) throw SpecError("fixed_effect_sd must be non-negative");
}

double regression_function(const DgpConfig& c, double ylag, double q) {
  const double level = c.beta2 * ylag + c.beta3 * q;
  return q > c.gamma ? level + c.delta1 + c.delta2 * ylag + c.delta3 * q : level;
}

PanelDataset simulate_panel(const DgpConfig& cfg, std::uint64_t seed) { return simulate_panel(cfg, seed, nullptr); }

PanelDataset simulate_panel(const DgpConfig& cfg, std::uint64_t seed, DgpInnovations* innov) {
  cfg.validate();
  const int n = cfg.n;
  const int T = cfg.T;
  const int total = cfg.burn_in + T;  // periods simulated after the initial values
  const double rho_c = std::sqrt(1.0 - cfg.rho_eu * cfg.rho_eu);
  const double q_sd0 = 1.0 / std::sqrt(1.0 - cfg.rho * cfg.rho);

  PanelDataset panel;
  panel.y.resize(n, T);
  panel.x.assign(2, MatrixXd(n, T));
  panel.x_names = {"ylag", "q"};
  panel.y_name = "y";
  for (int i = 0; i < n; ++i) panel.unit_ids.push_back(std::to_string(i + 1));
  for (int t = 1; t <= T; ++t) panel.times.push_back(t);
  if (innov) {
    innov->e.resize(n, T);
    innov->u_next.resize(n, T);
  }

  for (int i = 0; i < n; ++i) {
    auto rng = make_stream(StreamKey{seed, StreamKind::dgp, static_cast<std::uint64_t>(i), 0});
    std::normal_distribution<double> normal;
    const double eta = cfg.fixed_effect_sd * normal(rng);
    double q = q_sd0 * normal(rng);
    double y = 0.0;
    double u = normal(rng);  // u_1
    for (int s = 1; s <= total; ++s) {
      q = cfg.rho * q + u;
      const double e = normal(rng);
      u = cfg.rho_eu * e + rho_c * normal(rng);  // u_{s+1}
      const double ylag = y;
      y = regression_function(cfg, ylag, q) + eta + cfg.sigma * e;
      const int t = s - cfg.burn_in - 1;  // storage column of kept period
      if (t >= 0) {
        panel.y(i, t) = y;
        panel.x[0](i, t) = ylag;
        panel.x[1](i, t) = q;
        if (innov) {
          innov->e(i, t) = e;
          innov->u_next(i, t) = u;
        }
      }
    }
  }
  return panel;
}

}  // namespace dptr
