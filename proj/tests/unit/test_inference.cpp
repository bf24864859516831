#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "inference_internal.hpp"
#include "reml_internal.hpp"
#include "stvcm/basis.hpp"
#include "stvcm/inference.hpp"
#include "stvcm/rng.hpp"

using namespace stvcm;

namespace {

SpaceTimePanel sin_panel(int s_cnt, int t_cnt, double amp, double noise, std::uint64_t seed) {
  Rng rng = Rng::from_seed(seed);
  Rng loc = rng.child("loc"), eps = rng.child("eps");
  SpaceTimePanel p;
  for (int j = 0; j < s_cnt; ++j) {
    p.locations.push_back({loc.uniform01(), loc.uniform01()});
    p.location_ids.push_back("s" + std::to_string(j));
  }
  for (int i = 0; i < t_cnt; ++i) p.times.push_back(i + 1.0);
  p.covariates.push_back(Matrix::Ones(s_cnt, t_cnt));
  p.predictor_names = {"intercept"};
  p.response = Matrix(s_cnt, t_cnt);
  const double tmax = static_cast<double>(t_cnt);
  for (int j = 0; j < s_cnt; ++j)
    for (int i = 0; i < t_cnt; ++i)
      p.response(j, i) =
          amp * std::sin(2.0 * std::numbers::pi * p.times[static_cast<std::size_t>(i)] / tmax) +
          noise * eps.normal();
  return p;
}

FittedModel fit_small(const SpaceTimePanel& p, int m, int n, std::uint64_t seed) {
  KnotLayout k;
  k.temporal = select_temporal_knots(p.times, m);
  k.spatial = select_spatial_knots(p.locations, n, seed);
  auto design = assemble_design(p, k);
  return fit_reml(design, design.response);
}

ConfidenceBand hand_band(std::vector<double> grid, std::vector<double> center,
                         std::vector<double> halfwidth) {
  ConfidenceBand b;
  b.grid = EvalGrid::Temporal(std::move(grid));
  const auto g = static_cast<Eigen::Index>(b.grid.times.size());
  b.center.resize(g);
  b.lower.resize(g);
  b.upper.resize(g);
  b.se = Vector::Ones(g);
  for (Eigen::Index i = 0; i < g; ++i) {
    b.center(i) = center[static_cast<std::size_t>(i)];
    b.lower(i) = center[static_cast<std::size_t>(i)] - halfwidth[static_cast<std::size_t>(i)];
    b.upper(i) = center[static_cast<std::size_t>(i)] + halfwidth[static_cast<std::size_t>(i)];
  }
  b.level = 0.95;
  b.critical_value = 2.0;
  b.n_draws = 1000;
  return b;
}

}  // namespace

TEST_CASE("simultaneous_band: tighter level nests on shared draws") {
  auto panel = sin_panel(8, 12, 1.0, 0.2, 50);
  auto fit = fit_small(panel, 4, 3, 51);
  EvalGrid grid = EvalGrid::Temporal(panel.times);
  const auto b05 = simultaneous_band(fit, 0, BandPart::temporal, grid, 0.05, 2000, 99);
  const auto b10 = simultaneous_band(fit, 0, BandPart::temporal, grid, 0.10, 2000, 99);
  for (Eigen::Index i = 0; i < b05.lower.size(); ++i) {
    CHECK(b05.lower(i) <= b10.lower(i));
    CHECK(b05.upper(i) >= b10.upper(i));
  }
  CHECK(b05.critical_value >= b10.critical_value);
}

TEST_CASE("simultaneous_band: width at least the pointwise-normal width") {
  auto panel = sin_panel(8, 12, 1.0, 0.2, 52);
  auto fit = fit_small(panel, 4, 3, 53);
  EvalGrid grid = EvalGrid::Temporal(panel.times);
  const auto band = simultaneous_band(fit, 0, BandPart::temporal, grid, 0.05, 5000, 100);
  const double z975 = 1.959963984540054;
  CHECK(band.critical_value >= z975);
  for (Eigen::Index i = 0; i < band.lower.size(); ++i)
    CHECK(band.upper(i) - band.lower(i) >= 2.0 * z975 * band.se(i) - 1e-12);
}

TEST_CASE("simultaneous_band: reproducible given the seed, errors on bad inputs") {
  auto panel = sin_panel(6, 10, 0.8, 0.2, 54);
  auto fit = fit_small(panel, 3, 3, 55);
  EvalGrid grid = EvalGrid::Temporal(panel.times);
  const auto a = simultaneous_band(fit, 0, BandPart::temporal, grid, 0.05, 1500, 7);
  const auto b = simultaneous_band(fit, 0, BandPart::temporal, grid, 0.05, 1500, 7);
  CHECK(a.critical_value == b.critical_value);
  CHECK((a.lower - b.lower).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(simultaneous_band(fit, 0, BandPart::temporal, grid, 1.5, 1500, 7), Error);
  CHECK_THROWS_AS(simultaneous_band(fit, 0, BandPart::temporal, grid, 0.05, 100, 7), Error);
  CHECK_THROWS_AS(simultaneous_band(fit, 5, BandPart::temporal, grid, 0.05, 1500, 7), Error);
  CHECK_THROWS_AS(simultaneous_band(fit, 0, BandPart::spatial, grid, 0.05, 1500, 7), Error);
}

TEST_CASE("simultaneous_band: band draws independent of thread count") {
  auto panel = sin_panel(6, 10, 0.8, 0.2, 56);
  auto fit = fit_small(panel, 3, 3, 57);
  EvalGrid grid = EvalGrid::Temporal(panel.times);
  const auto t1 = simultaneous_band(fit, 0, BandPart::temporal, grid, 0.05, 2000, 11, 1);
  const auto t4 = simultaneous_band(fit, 0, BandPart::temporal, grid, 0.05, 2000, 11, 4);
  CHECK(t1.critical_value == t4.critical_value);
  CHECK((t1.upper - t4.upper).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("classify_shape: wide band is constant with witness 0") {
  auto band = hand_band({0, 0.5, 1.0}, {0, 0, 0}, {1, 1, 1});
  const auto v = classify_shape(band);
  CHECK(v.shape == Shape::constant);
  REQUIRE(v.witness.size() == 1);
  CHECK(std::abs(v.witness[0]) < 1e-12);
}

TEST_CASE("classify_shape: tight band on a line is linear with slope 2") {
  std::vector<double> grid, center, hw;
  for (int i = 0; i <= 20; ++i) {
    const double t = i / 20.0;
    grid.push_back(t);
    center.push_back(2.0 * t);
    hw.push_back(0.05);
  }
  const auto v = classify_shape(hand_band(grid, center, hw));
  CHECK(v.shape == Shape::linear);
  REQUIRE(v.witness.size() == 2);
  CHECK(v.witness[1] == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("classify_shape: tight band on a sine is nonlinear, matching grid search") {
  std::vector<double> grid, center, hw;
  for (int i = 0; i <= 40; ++i) {
    const double t = i / 40.0;
    grid.push_back(t);
    center.push_back(std::sin(2.0 * std::numbers::pi * t));
    hw.push_back(0.05);
  }
  const auto band = hand_band(grid, center, hw);
  const auto v = classify_shape(band);
  CHECK(v.shape == Shape::nonlinear);

  // Dense (a, b) grid-search oracle confirms no feasible line.
  bool any_feasible = false;
  for (double a = -2.0; a <= 2.0 && !any_feasible; a += 0.01)
    for (double b = -8.0; b <= 8.0 && !any_feasible; b += 0.02) {
      bool ok = true;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double f = a + b * grid[i];
        if (f < band.lower(static_cast<Eigen::Index>(i)) ||
            f > band.upper(static_cast<Eigen::Index>(i))) {
          ok = false;
          break;
        }
      }
      any_feasible = ok;
    }
  CHECK_FALSE(any_feasible);
}

TEST_CASE("classify_shape: constant verdict implies linear feasibility") {
  Rng rng = Rng::from_seed(60).child("bands");
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> grid, center, hw;
    for (int i = 0; i < 12; ++i) {
      grid.push_back(i / 11.0);
      center.push_back(rng.normal());
      hw.push_back(rng.uniform(0.5, 3.0));
    }
    const auto band = hand_band(grid, center, hw);
    const auto v = classify_shape(band);
    if (v.shape != Shape::constant) continue;
    std::vector<detail::LinCon> cons;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      cons.push_back({{1.0, grid[i]}, band.upper(static_cast<Eigen::Index>(i))});
      cons.push_back({{-1.0, -grid[i]}, -band.lower(static_cast<Eigen::Index>(i))});
    }
    CHECK(detail::linear_feasible(cons, 2, 1e4, 1e-9, nullptr));
  }
}

TEST_CASE("classify_shape: boundary contact counts as feasible") {
  // Band degenerates to a single horizontal line.
  auto band = hand_band({0, 1, 2}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0});
  const auto v = classify_shape(band);
  CHECK(v.shape == Shape::constant);
  CHECK(v.witness[0] == doctest::Approx(1.0));
}

TEST_CASE("classify_shape: collinear spatial slice works, planar grid errors") {
  ConfidenceBand b;
  std::vector<Point> line;
  for (int i = 0; i <= 10; ++i) line.push_back({i / 10.0, 0.5 + i / 20.0});
  b.grid = EvalGrid::Spatial(line);
  b.center = Vector::Zero(11);
  b.lower = Vector::Constant(11, -1.0);
  b.upper = Vector::Constant(11, 1.0);
  b.se = Vector::Ones(11);
  b.level = 0.95;
  CHECK(classify_shape(b).shape == Shape::constant);

  ConfidenceBand planar = b;
  std::vector<Point> cloud;
  Rng rng = Rng::from_seed(61).child("cloud");
  for (int i = 0; i < 11; ++i) cloud.push_back({rng.uniform01(), rng.uniform01()});
  planar.grid = EvalGrid::Spatial(cloud);
  CHECK_THROWS_WITH_AS(classify_shape(planar), doctest::Contains("classify_shape_planar"),
                       Error);
}

TEST_CASE("classify_shape_planar: plane witness a + b1 s1 + b2 s2") {
  std::vector<Point> cloud;
  Rng rng = Rng::from_seed(62).child("plane");
  for (int i = 0; i < 25; ++i) cloud.push_back({rng.uniform01(), rng.uniform01()});
  ConfidenceBand b;
  b.grid = EvalGrid::Spatial(cloud);
  const auto g = static_cast<Eigen::Index>(cloud.size());
  b.center.resize(g);
  b.lower.resize(g);
  b.upper.resize(g);
  b.se = Vector::Ones(g);
  b.level = 0.95;
  for (Eigen::Index i = 0; i < g; ++i) {
    const double f = 0.5 + 1.5 * cloud[static_cast<std::size_t>(i)].x -
                     2.0 * cloud[static_cast<std::size_t>(i)].y;
    b.center(i) = f;
    b.lower(i) = f - 0.05;
    b.upper(i) = f + 0.05;
  }
  const auto v = classify_shape_planar(b);
  CHECK(v.shape == Shape::linear);
  REQUIRE(v.witness.size() == 3);
  CHECK(v.witness[1] == doctest::Approx(1.5).epsilon(0.1));
  CHECK(v.witness[2] == doctest::Approx(-2.0).epsilon(0.1));

  // A rippled surface admits no plane.
  for (Eigen::Index i = 0; i < g; ++i) {
    const double f = std::sin(6.0 * cloud[static_cast<std::size_t>(i)].x) *
                     std::cos(6.0 * cloud[static_cast<std::size_t>(i)].y);
    b.center(i) = f;
    b.lower(i) = f - 0.05;
    b.upper(i) = f + 0.05;
  }
  CHECK(classify_shape_planar(b).shape == Shape::nonlinear);
}

TEST_CASE("significance_map: trivial labels") {
  auto band = hand_band({0, 1, 2}, {0.5, 0.0, -0.4}, {0.3, 0.3, 0.3});
  const auto sig = significance_map(band);
  CHECK(sig[0] == Significance::positive);
  CHECK(sig[1] == Significance::not_significant);
  CHECK(sig[2] == Significance::negative);
}

TEST_CASE("significance_map: monotone in the level on shared draws") {
  auto panel = sin_panel(10, 10, 1.0, 0.3, 63);
  auto fit = fit_small(panel, 3, 4, 64);
  EvalGrid grid = EvalGrid::Spatial(panel.locations);
  const auto b05 = simultaneous_band(fit, 0, BandPart::spatial, grid, 0.05, 2000, 65);
  const auto b10 = simultaneous_band(fit, 0, BandPart::spatial, grid, 0.10, 2000, 65);
  const auto s05 = significance_map(b05);
  const auto s10 = significance_map(b10);
  for (std::size_t i = 0; i < s05.size(); ++i)
    if (s05[i] != Significance::not_significant) CHECK(s10[i] == s05[i]);
}

TEST_CASE("rlrt statistic: invariant under adding a fixed-column contribution") {
  auto panel = sin_panel(8, 8, 1.0, 0.25, 66);
  KnotLayout k;
  k.temporal = select_temporal_knots(panel.times, 2);
  k.spatial = select_spatial_knots(panel.locations, 3, 67);
  auto design = assemble_design(panel, k);

  const auto blocks = detail::blocks_for_layout(design.layout);
  auto prob = detail::make_cross_problem(design.fixed, design.random, blocks,
                                         detail::n_components_for(design.layout),
                                         design.response);
  RemlOptions ropts;
  ropts.n_starts = 1;
  RemlOptions nopts = ropts;
  nopts.pinned_components = {2};  // interaction component of predictor 1

  auto stat_for = [&](const Vector& y) {
    detail::CrossProblem local = prob;
    detail::set_response(local, design.fixed, design.random, y);
    const auto full = detail::reml_optimize(local, ropts);
    const auto null = detail::reml_optimize(local, nopts);
    return std::max(0.0, 2.0 * (full.loglik_reml - null.loglik_reml));
  };

  const double s0 = stat_for(design.response);
  const Vector y2 = design.response + 0.7 * design.fixed.col(1);
  const double s1 = stat_for(y2);
  CHECK(s0 == doctest::Approx(s1).epsilon(1e-6).scale(1.0 + s0));
}

TEST_CASE("test_interaction: p-value in range, deterministic, thread independent") {
  // Strong nonseparable signal so the test has something to find.
  Rng rng = Rng::from_seed(68);
  Rng loc = rng.child("loc"), eps = rng.child("eps");
  SpaceTimePanel p;
  const int s_cnt = 12, t_cnt = 8;
  for (int j = 0; j < s_cnt; ++j) {
    p.locations.push_back({loc.uniform01(), loc.uniform01()});
    p.location_ids.push_back("s" + std::to_string(j));
  }
  for (int i = 0; i < t_cnt; ++i) p.times.push_back(i + 1.0);
  p.covariates.push_back(Matrix::Ones(s_cnt, t_cnt));
  p.predictor_names = {"intercept"};
  p.response = Matrix(s_cnt, t_cnt);
  for (int j = 0; j < s_cnt; ++j)
    for (int i = 0; i < t_cnt; ++i)
      p.response(j, i) = std::sin(p.times[static_cast<std::size_t>(i)]) *
                             std::cos(4.0 * p.locations[static_cast<std::size_t>(j)].x) +
                         0.1 * eps.normal();

  KnotLayout k;
  k.temporal = select_temporal_knots(p.times, 3);
  k.spatial = select_spatial_knots(p.locations, 4, 69);

  InteractionTestOptions opts;
  opts.threads = 2;
  const auto t1 = test_interaction(p, k, 0, 500, 1234, opts);
  CHECK(t1.p_value >= 0.0);
  CHECK(t1.p_value <= 1.0);
  CHECK(t1.rlrt_stat >= 0.0);
  CHECK(t1.p_value < 0.05);  // strong interaction

  opts.threads = 1;
  const auto t2 = test_interaction(p, k, 0, 500, 1234, opts);
  CHECK(t1.p_value == t2.p_value);
  CHECK(t1.rlrt_stat == t2.rlrt_stat);

  CHECK_THROWS_AS(test_interaction(p, k, 0, 100, 1, opts), Error);
}
