#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stvcm/basis.hpp"
#include "stvcm/types.hpp"

namespace stvcm {

// One variance per random-effect block kind and predictor; the implied
// penalty is lambda = sigma_eps2 / component (infinite at zero).
struct VarianceComponents {
  double sigma_eps2 = 0.0;
  std::vector<double> sigma_T2;  // per predictor
  std::vector<double> sigma_S2;
  std::vector<double> sigma_I2;  // empty when the design has no interaction
  std::vector<std::string> boundary;  // names of components clamped at the floor

  double lambda_T(int r) const { return penalty(sigma_T2.at(static_cast<std::size_t>(r))); }
  double lambda_S(int r) const { return penalty(sigma_S2.at(static_cast<std::size_t>(r))); }
  double lambda_I(int r) const { return penalty(sigma_I2.at(static_cast<std::size_t>(r))); }

 private:
  double penalty(double s2) const {
    return s2 > 0.0 ? sigma_eps2 / s2 : std::numeric_limits<double>::infinity();
  }
};

struct Convergence {
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  int best_start = 0;
  std::vector<double> objective_trace;  // accepted values, nonincreasing
};

// Raw-problem description for fit_reml_raw: random-effect column ranges
// grouped into variance components (several blocks may share a component).
struct RandomBlock {
  int component = 0;
  int col_begin = 0;  // within the random design
  int col_end = 0;    // exclusive
};

struct RemlOptions {
  int max_iter = 500;
  double grad_tol = 1e-7;
  int n_starts = 3;
  double variance_floor = 1e-12;
  // Component ids pinned to zero (their columns leave the model entirely).
  std::vector<int> pinned_components;
  // Single warm start in log-variance space: [log s2_eps, log s2_k ...] over
  // free components; overrides the deterministic starts.
  std::optional<Vector> warm_start;
  bool throw_on_nonconvergence = true;
};

struct RawFit {
  Vector fixed_effects;
  Vector random_effects;       // zeros in pinned/dropped columns
  double sigma_eps2 = 0.0;
  std::vector<double> sigma2;  // per component; 0 where pinned
  double loglik_reml = 0.0;
  Convergence convergence;
  int n = 0, p = 0;
  Matrix ata;   // [X Z]'[X Z], full column set
  Vector aty;
  double yty = 0.0;
  std::vector<RandomBlock> blocks;
  int n_components = 0;
};

// REML for y = X theta + Z u + eps with u_k ~ N(0, sigma_k^2 I) per block
// component. Profiles everything through the penalized normal-equation
// matrix C = [X Z]'[X Z] + diag(0, lambda); theta and u are the GLS/BLUP
// solutions at the optimum.
RawFit fit_reml_raw(const Matrix& x, const Matrix& z, const std::vector<RandomBlock>& blocks,
                    int n_components, const Vector& y, const RemlOptions& opts = {});

// Fitted single-level model: fixed effects theta per predictor
// (tau0, tau1, delta11, delta12), predicted random effects, variance
// components, and enough design metadata to rebuild the coefficient
// covariance for band construction.
struct FittedModel {
  ColumnLayout layout;
  KnotLayout knots;
  DesignOptions design_options;
  Vector theta;  // 4R
  Vector u;      // R(M+N+MN)
  VarianceComponents vc;
  double loglik_reml = 0.0;
  Convergence convergence;

  // Design cross-products of A = [X Z] and axes for default grids.
  Matrix ata;
  Vector aty;
  double yty = 0.0;
  int n_rows = 0;
  std::vector<double> observed_times;
  std::vector<Point> observed_locations;
  std::vector<std::uint8_t> missing_mask;

  int n_coefs() const { return layout.fixed_cols() + layout.random_cols(); }
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& msg, std::shared_ptr<FittedModel> best)
      : Error(ErrorKind::non_convergence, msg), best_so_far(std::move(best)) {}
  std::shared_ptr<FittedModel> best_so_far;
};

FittedModel fit_reml(const DesignMatrices& design, const Vector& y,
                     const RemlOptions& opts = {});

// Per-predictor penalties for the explicit penalized least-squares route.
// +infinity forces a block's coefficients to zero.
struct Penalties {
  std::vector<double> lambda_T, lambda_S, lambda_I;
  static Penalties from_variance_components(const VarianceComponents& vc);
};

// Minimizes ||y - X theta - Z u||^2 + sum_r { lT ||u_r||^2 + lS ||v_r||^2
// + lI ||nu_r||^2 } via QR on the penalty-augmented system; an independent
// route from fit_reml's normal equations. Returns [theta; u].
Vector penalized_fit(const DesignMatrices& design, const Vector& y, const Penalties& pen);

struct CoefficientParts {
  Vector temporal;     // alpha_r(t): const + slope*t + temporal kernels
  Vector spatial;      // beta_r(s): linear in s + spatial kernels
  Vector interaction;  // sum_mn nu_mn K_T K_S
  Vector total;
};

// gamma_r evaluated at paired (t, s) grid points, with the three additive
// parts exposed separately.
CoefficientParts evaluate_coefficient(const FittedModel& model, int predictor,
                                      std::span<const double> times,
                                      std::span<const Point> points);

}  // namespace stvcm
