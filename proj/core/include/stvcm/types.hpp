#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "stvcm/error.hpp"

namespace stvcm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point& a, const Point& b) {
    return a.x == b.x && a.y == b.y;
  }
};

inline double distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Response and covariate values on an S-location x T-time grid.
// response(j, i) is Y at location j, time i; NaN marks a missing cell.
// covariates[r] holds X_r on the same grid (X_1 is usually all ones).
struct SpaceTimePanel {
  std::vector<std::string> location_ids;  // size S
  std::vector<Point> locations;           // size S
  std::vector<double> times;              // size T, strictly increasing
  Matrix response;                        // S x T
  std::vector<Matrix> covariates;         // R matrices, each S x T
  std::vector<std::string> predictor_names;

  Eigen::Index n_locations() const { return static_cast<Eigen::Index>(locations.size()); }
  Eigen::Index n_times() const { return static_cast<Eigen::Index>(times.size()); }
  Eigen::Index n_predictors() const { return static_cast<Eigen::Index>(covariates.size()); }

  void validate() const;
};

// Per-provider responses on a shared grid with shared covariates.
struct MultilevelPanel {
  std::vector<std::string> providers;     // size P >= 2
  std::vector<Matrix> responses;          // P matrices, each S x T
  std::vector<std::string> location_ids;
  std::vector<Point> locations;
  std::vector<double> times;
  std::vector<Matrix> covariates;
  std::vector<std::string> predictor_names;

  Eigen::Index n_providers() const { return static_cast<Eigen::Index>(providers.size()); }
  SpaceTimePanel provider_panel(Eigen::Index p) const;
  // Stacks providers into one panel with P*S rows of repeated locations,
  // ordered provider-major. Used by the deviation-free reduction.
  SpaceTimePanel pooled_panel() const;

  void validate() const;
};

}  // namespace stvcm
