#pragma once

// Internal: band simulation shared by the single-level and multilevel paths,
// plus small linear-feasibility helpers for shape classification.

#include <cstdint>
#include <vector>

#include "stvcm/inference.hpp"
#include "stvcm/types.hpp"

namespace stvcm::detail {

// Builds a simultaneous band for the contrast rows (over the full coefficient
// vector, fixed columns first). Columns of components with zero variance are
// ignored. The critical value is the (1-gamma) order-statistic quantile of
// max_g |z_g|/se_g over n_draws joint-normal simulations.
ConfidenceBand simulate_band(const Matrix& ata, int p, const std::vector<RandomBlock>& blocks,
                             const std::vector<double>& sigma2, double sigma_eps2,
                             const Matrix& contrast, const Vector& center, const EvalGrid& grid,
                             double gamma, int n_draws, std::uint64_t seed, int threads);

// One linear constraint w . x <= rhs.
struct LinCon {
  std::vector<double> w;
  double rhs = 0.0;
};

// Feasibility of a system of <= constraints in dim variables (dim 1, 2 or 3),
// intersected with a bounding box. Boundary contact counts as feasible up to
// `tol`. Returns a witness point when feasible.
bool linear_feasible(const std::vector<LinCon>& cons, int dim, double box, double tol,
                     std::vector<double>* witness);

}  // namespace stvcm::detail
