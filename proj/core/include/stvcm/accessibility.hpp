#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stvcm/types.hpp"

namespace stvcm {

// A community is a neighborhood represented by B >= 1 sample locations
// rather than a single centroid.
struct Community {
  std::string id;
  std::vector<Point> sample_points;
};

// Resolves travel distances from a sample point to every service site of a
// given year. Implementations: straight-line, precomputed matrix, weighted
// graph with shortest-path resolution.
class DistanceSource {
 public:
  virtual ~DistanceSource() = default;
  // Fills `out` with one distance per site of year index `yi`.
  // `point_id` is the caller's global sample-point index (matrix/graph modes
  // key on it); `p` carries the coordinates for geometric modes.
  virtual void distances(std::size_t point_id, const Point& p, std::size_t yi,
                         std::vector<double>& out) const = 0;
  virtual const char* name() const = 0;
};

struct ServiceNetwork {
  std::vector<double> years;                    // ordered time labels
  std::vector<std::vector<Point>> sites_by_year;
  std::shared_ptr<const DistanceSource> source;

  std::size_t year_index(double year) const;    // throws validation error
  void validate() const;
};

// Straight-line distances from coordinates; needs no point registry.
class EuclideanDistance final : public DistanceSource {
 public:
  explicit EuclideanDistance(std::vector<std::vector<Point>> sites_by_year)
      : sites_(std::move(sites_by_year)) {}
  void distances(std::size_t point_id, const Point& p, std::size_t yi,
                 std::vector<double>& out) const override;
  const char* name() const override { return "euclidean"; }

 private:
  std::vector<std::vector<Point>> sites_;
};

// Precomputed point-to-site distances, one matrix per year; rows are global
// sample-point ids, columns follow the year's site order.
class MatrixDistance final : public DistanceSource {
 public:
  explicit MatrixDistance(std::vector<Matrix> per_year) : per_year_(std::move(per_year)) {}
  void distances(std::size_t point_id, const Point& p, std::size_t yi,
                 std::vector<double>& out) const override;
  const char* name() const override { return "matrix"; }

 private:
  std::vector<Matrix> per_year_;
};

// Undirected weighted graph; sample points and sites are mapped to vertices
// and distances come from single-source shortest paths.
class GraphDistance final : public DistanceSource {
 public:
  GraphDistance(std::size_t n_vertices,
                std::vector<std::tuple<int, int, double>> edges,
                std::vector<int> point_vertex,               // per global point id
                std::vector<std::vector<int>> site_vertex);  // per year, per site
  void distances(std::size_t point_id, const Point& p, std::size_t yi,
                 std::vector<double>& out) const override;
  const char* name() const override { return "graph"; }

  // Shortest path lengths from `start` to every vertex (inf if unreachable).
  std::vector<double> shortest_paths(int start) const;

 private:
  std::vector<std::vector<std::pair<int, double>>> adj_;
  std::vector<int> point_vertex_;
  std::vector<std::vector<int>> site_vertex_;
};

// Population and service intensities evaluated at sample points; the ratio
// P/R is the utilization weight W. Evaluators receive the year index.
struct RateField {
  std::function<double(const Point&, std::size_t yi)> population;
  std::function<double(const Point&, std::size_t yi)> service;
  double bandwidth = 0.0;  // informational; used when built from point clouds
};

struct AccessibilityPanel {
  Matrix values;  // S communities x T years
  std::vector<std::string> community_ids;
  std::vector<double> years;
  int q_nearest = 3;
  double beta = 0.0;
};

// Mean of the q smallest travel distances from `p` to the sites of `year`.
// point_id identifies p for matrix/graph sources.
double travel_cost(const ServiceNetwork& network, std::size_t point_id, const Point& p,
                   double year, int q);

// Gaussian intensity surface: sum of w_i * N(x_i, h^2 I) density kernels, so
// the surface integrates to the total weight. Empty weights mean unit weights.
std::vector<double> smooth_rate(std::span<const Point> points, std::span<const double> weights,
                                std::span<const Point> grid, double bandwidth);

// Reference-rule bandwidth for planar point sets: sigma_hat * n^(-1/6).
double silverman_bandwidth(std::span<const Point> points);

struct HuberOptions {
  double tuning = 1.345;
  int max_iter = 50;
  double rel_tol = 1e-10;
  double weight_floor = 1e-12;  // W is clamped here before logs
};

// Distance-utility exponent: negated slope of a Huber-IRLS regression of
// log W on log C (with intercept). Exact power laws W = C^-beta are
// recovered to high precision.
double estimate_beta(std::span<const double> costs, std::span<const double> weights,
                     const HuberOptions& opts = {});

// Ordinary least squares version, exposed for comparison and diagnostics.
double estimate_beta_ols(std::span<const double> costs, std::span<const double> weights,
                         double weight_floor = 1e-12);

// Utilization-adjusted travel cost panel:
//   Y(s,t) = (1/B_s) sum_b C(u_b,t)^beta * W(u_b,t),  W = P/R.
// Sample-point global ids are assigned by community order, then point order.
AccessibilityPanel accessibility_panel(const ServiceNetwork& network,
                                       const std::vector<Community>& communities,
                                       const RateField& rates, int q, double beta,
                                       int threads = 1);

}  // namespace stvcm
