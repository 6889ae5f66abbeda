#pragma once

// Brute-force minimisation of the GMM criterion over alpha with a general-purpose
// quasi-Newton method, independent of the closed-form profiled solve.

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <cmath>
#include <limits>
#include <random>

namespace dptr::testing {

struct QuadraticCriterion {
  Eigen::VectorXd v;
  Eigen::MatrixXd M;
  Eigen::MatrixXd W;
};

namespace detail {

inline Eigen::Map<const Eigen::VectorXd> as_eigen(const gsl_vector* x) {
  return {x->data, static_cast<Eigen::Index>(x->size)};
}

inline double oracle_f(const gsl_vector* x, void* params) {
  const auto* q = static_cast<const QuadraticCriterion*>(params);
  const Eigen::VectorXd g = q->v + q->M * as_eigen(x);
  return g.dot(q->W * g);
}

inline void oracle_df(const gsl_vector* x, void* params, gsl_vector* grad) {
  const auto* q = static_cast<const QuadraticCriterion*>(params);
  const Eigen::VectorXd g = q->v + q->M * as_eigen(x);
  const Eigen::VectorXd d = 2.0 * q->M.transpose() * (q->W * g);
  for (Eigen::Index j = 0; j < d.size(); ++j) gsl_vector_set(grad, static_cast<std::size_t>(j), d(j));
}

inline void oracle_fdf(const gsl_vector* x, void* params, double* f, gsl_vector* grad) {
  *f = oracle_f(x, params);
  oracle_df(x, params, grad);
}

}  // namespace detail

struct OracleResult {
  Eigen::VectorXd alpha;
  double criterion = std::numeric_limits<double>::infinity();
};

/// BFGS from `starts` random starting points; the best end point is returned.
inline OracleResult bfgs_minimize(const QuadraticCriterion& q, int starts, std::uint64_t seed) {
  gsl_set_error_handler_off();
  const auto dim = static_cast<std::size_t>(q.M.cols());
  gsl_multimin_function_fdf fn;
  fn.n = dim;
  fn.f = &detail::oracle_f;
  fn.df = &detail::oracle_df;
  fn.fdf = &detail::oracle_fdf;
  fn.params = const_cast<QuadraticCriterion*>(&q);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 2.0);
  OracleResult best;
  gsl_vector* x = gsl_vector_alloc(dim);
  gsl_multimin_fdfminimizer* s = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, dim);
  for (int start = 0; start < starts; ++start) {
    for (std::size_t j = 0; j < dim; ++j) gsl_vector_set(x, j, normal(rng));
    // Several restarts from the last iterate let BFGS refresh its curvature model.
    for (int round = 0; round < 20; ++round) {
      gsl_multimin_fdfminimizer_set(s, &fn, x, 0.1, 0.1);
      for (int it = 0; it < 5000; ++it) {
        if (gsl_multimin_fdfminimizer_iterate(s) != GSL_SUCCESS) break;
        if (gsl_multimin_test_gradient(s->gradient, 1e-14) == GSL_SUCCESS) break;
      }
      gsl_vector_memcpy(x, s->x);
    }
    const double f = s->f;
    if (f < best.criterion) {
      best.criterion = f;
      best.alpha = detail::as_eigen(s->x);
    }
  }
  gsl_multimin_fdfminimizer_free(s);
  gsl_vector_free(x);
  return best;
}

}  // namespace dptr::testing
