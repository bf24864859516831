#pragma once

// Internal: cross-product form of the REML problem shared by the
// single-level fitter, the multilevel fitter, the RLRT bootstrap (which
// refits many responses against one design), and band construction (which
// rebuilds the penalized normal-equation matrix C).

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <vector>

#include "stvcm/mixed_model.hpp"

namespace stvcm::detail {

struct CrossProblem {
  Matrix ata;   // [X Z]'[X Z], fixed columns first
  Vector aty;
  double yty = 0.0;
  int n = 0;
  int p = 0;  // fixed columns
  std::vector<RandomBlock> blocks;  // col ranges relative to the random part
  int n_components = 0;
  double var_y = 1.0;
};

struct CoreResult {
  Vector coef;                 // p + q, zeros at pinned columns
  double sigma_eps2 = 0.0;
  std::vector<double> sigma2;  // per component, 0 where pinned
  double loglik_reml = 0.0;
  Convergence convergence;
};

CrossProblem make_cross_problem(const Matrix& x, const Matrix& z,
                                const std::vector<RandomBlock>& blocks, int n_components,
                                const Vector& y);

// Replaces the response, keeping the design cross-products.
void set_response(CrossProblem& prob, const Matrix& x, const Matrix& z, const Vector& y);

CoreResult reml_optimize(const CrossProblem& prob, const RemlOptions& opts);

// -2 * restricted loglik and its gradient at log-variance parameters
// [log s2_eps, log s2_1, ...], all components active. Used by tests to check
// the analytic gradient against finite differences.
double reml_neg2_loglik(const CrossProblem& prob, const Vector& log_params, Vector* grad);

// Blocks/components implied by the single-level column layout: per
// predictor, a temporal, a spatial, and (when present) an interaction
// component, ids r*kinds + kind.
std::vector<RandomBlock> blocks_for_layout(const ColumnLayout& layout);
int n_components_for(const ColumnLayout& layout);
std::vector<double> sigma2_vector(const VarianceComponents& vc, const ColumnLayout& layout);
VarianceComponents vc_from_sigma2(const std::vector<double>& sigma2, double sigma_eps2,
                                  const ColumnLayout& layout, double floor);

// C = A'A + diag(0, lambda) over the columns whose component variance is
// positive; `active` receives the kept column indices (fixed cols always).
Matrix build_penalized_crossprod(const Matrix& ata, int p, const std::vector<RandomBlock>& blocks,
                                 const std::vector<double>& sigma2, double sigma_eps2,
                                 std::vector<int>* active);

}  // namespace stvcm::detail
