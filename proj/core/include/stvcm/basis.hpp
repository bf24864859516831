#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stvcm/types.hpp"

namespace stvcm {

// Cubic radial basis paired with the linear fixed part: |t - knot|^3.
double temporal_kernel(double t, double knot);

// Thin-plate radial function r^2 log r with the removable singularity at
// r = 0 evaluated as 0. Depends on the radius only, hence rotation invariant.
double spatial_kernel(const Point& s, const Point& knot);

enum class SpatialKernelKind { thin_plate, matern32 };

// Matern(nu=3/2) alternative for the spatial kernel, with range rho.
double spatial_kernel_matern32(const Point& s, const Point& knot, double rho);

// m equally spaced interior sample quantiles (probabilities k/(m+1)) of the
// observed times; linear-interpolation quantiles on the sorted values.
std::vector<double> select_temporal_knots(std::vector<double> times, int m);

// Space-filling subset of the locations: k-means++ seeding, Lloyd rounds,
// then greedy point swaps shrinking the coverage radius
// max_x min_k dist(x, knot_k). Deterministic given the seed.
std::vector<Point> select_spatial_knots(const std::vector<Point>& locations, int n,
                                        std::uint64_t seed);

// Largest distance from any location to its nearest knot.
double coverage_radius(const std::vector<Point>& locations, const std::vector<Point>& knots);

// Knot families: `temporal`/`spatial` are the global family (family 0);
// provider families, when present, must satisfy the pairwise cross-family
// separations so the multilevel decomposition stays identifiable.
struct KnotLayout {
  std::vector<double> temporal;
  std::vector<Point> spatial;
  std::vector<std::vector<double>> provider_temporal;  // families 1..P
  std::vector<std::vector<Point>> provider_spatial;
  double min_temporal_sep = 0.0;  // d_T
  double min_spatial_sep = 0.0;   // d_S
  std::uint64_t seed = 0;

  std::size_t provider_count() const { return provider_temporal.size(); }
  bool has_providers() const { return !provider_temporal.empty(); }

  struct SeparationReport {
    bool identifiable = true;
    double min_temporal_gap = 0.0;  // over all cross-family pairs
    double min_spatial_gap = 0.0;
    std::vector<std::string> violations;
  };
  // Exhaustive cross-family pair check against d_T and d_S.
  SeparationReport check_separation() const;

  // Throws identifiability error when provider families violate separation;
  // also checks ordering/distinctness of the global family.
  void validate() const;
};

struct DesignOptions {
  bool interaction = true;  // include the temporal x spatial product block
  SpatialKernelKind spatial_kernel = SpatialKernelKind::thin_plate;
  double matern_range = 1.0;
};

// Column bookkeeping for the single-level design. Fixed effects per
// predictor: [const, t, s1, s2] (the spatial intercept is dropped for
// identifiability). Random effects per predictor: M temporal kernels,
// N spatial kernels, and M*N interaction products ordered m-major.
struct ColumnLayout {
  int R = 0;
  int M = 0;
  int N = 0;
  bool interaction = true;
  std::vector<std::string> predictor_names;

  int fixed_per_predictor() const { return 4; }
  int fixed_cols() const { return 4 * R; }
  int random_per_predictor() const { return M + N + (interaction ? M * N : 0); }
  int random_cols() const { return R * random_per_predictor(); }

  int fixed_offset(int r) const { return 4 * r; }
  int temporal_offset(int r) const { return r * random_per_predictor(); }
  int spatial_offset(int r) const { return temporal_offset(r) + M; }
  int interaction_offset(int r) const { return spatial_offset(r) + N; }

  std::string predictor_label(int r) const;
  std::string fixed_col_name(int col) const;
};

struct DesignMatrices {
  Matrix fixed;   // rows x 4R
  Matrix random;  // rows x R(M+N+MN)
  Vector response;
  ColumnLayout layout;
  KnotLayout knots;
  DesignOptions options;
  std::vector<int> row_location;  // row -> location index j
  std::vector<int> row_time;      // row -> time index i
  std::vector<std::uint8_t> missing_mask;  // S*T cells (location-major), 1 = dropped
  std::vector<double> times;      // copies of the panel axes for evaluation grids
  std::vector<Point> locations;

  Eigen::Index rows() const { return fixed.rows(); }
};

// Builds the fixed and random designs on the panel grid, dropping rows with
// missing responses and recording them in missing_mask. Rows are ordered
// location-major (location j outer, time i inner). The interaction block is
// formed as row-wise products of the temporal and spatial kernel columns.
DesignMatrices assemble_design(const SpaceTimePanel& panel, const KnotLayout& knots,
                               const DesignOptions& opts = {});

}  // namespace stvcm
