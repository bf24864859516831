#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stvcm/mixed_model.hpp"
#include "stvcm/types.hpp"

namespace stvcm {

// Evaluation grid for bands: pure-temporal, pure-spatial, or paired (t, s).
struct EvalGrid {
  enum class Mode { temporal, spatial, full };
  Mode mode = Mode::temporal;
  std::vector<double> times;
  std::vector<Point> points;

  static EvalGrid Temporal(std::vector<double> ts);
  static EvalGrid Spatial(std::vector<Point> ps);
  static EvalGrid Full(std::vector<double> ts, std::vector<Point> ps);
  std::size_t size() const;
  void validate() const;
};

enum class BandPart { temporal, spatial, full };

struct ConfidenceBand {
  EvalGrid grid;
  Vector center;
  Vector lower;
  Vector upper;
  Vector se;              // pointwise standard errors of the contrast
  double level = 0.0;     // 1 - gamma
  double critical_value = 0.0;
  int n_draws = 0;
  std::uint64_t seed = 0;
};

enum class Shape { constant, linear, nonlinear };

struct ShapeVerdict {
  Shape shape = Shape::nonlinear;
  // constant: {a}; linear: {a, b}; planar: {a, b1, b2}; empty for nonlinear.
  std::vector<double> witness;
  double level = 0.0;
};

const char* shape_name(Shape s);

struct InteractionTest {
  int predictor = 0;
  double rlrt_stat = 0.0;
  double p_value = 1.0;
  int null_draws = 0;
  std::string method = "parametric-bootstrap";
  std::uint64_t seed = 0;
  double loglik_full = 0.0;
  double loglik_null = 0.0;
};

// Simultaneous band for one varying coefficient (or one of its additive
// parts): center +- c * se, where c is the (1-gamma) empirical quantile of
// max_g |Z(g)|/se(g) over draws from the joint normal with the estimator's
// prediction covariance sigma_eps^2 * C^-1. Reproducible given the seed.
ConfidenceBand simultaneous_band(const FittedModel& model, int predictor, BandPart part,
                                 const EvalGrid& grid, double gamma, int n_draws,
                                 std::uint64_t seed, int threads = 1);

// Band-feasibility shape classification on a one-dimensional grid
// (temporal, or a collinear spatial slice): constant if some horizontal
// line fits inside the band, else linear if some line does, else nonlinear.
// Boundary contact counts as feasible.
ShapeVerdict classify_shape(const ConfidenceBand& band);

// Planar extension for 2-D spatial grids: constant, then a + b1 s1 + b2 s2.
ShapeVerdict classify_shape_planar(const ConfidenceBand& band);

enum class Significance { positive, negative, not_significant };

const char* significance_name(Significance s);

// positive where lower > 0, negative where upper < 0.
std::vector<Significance> significance_map(const ConfidenceBand& band);

struct InteractionTestOptions {
  DesignOptions design;
  RemlOptions reml;  // n_starts forced to 1 internally so the statistic is
                     // the same deterministic function of data and bootstrap
                     // responses
  int threads = 1;
};

// Restricted LRT for a zero space-time interaction variance of predictor r:
// stat = 2 (l_full - l_null), p-value by parametric bootstrap under the
// null fit. n_boot >= 500.
InteractionTest test_interaction(const SpaceTimePanel& panel, const KnotLayout& knots,
                                 int predictor, int n_boot, std::uint64_t seed,
                                 const InteractionTestOptions& opts = {});

}  // namespace stvcm
