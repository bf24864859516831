#include <doctest.h>

#include <cmath>

#include "stvcm/basis.hpp"
#include "stvcm/simulate.hpp"

using namespace stvcm;

TEST_CASE("generate: zero noise reproduces the signal exactly") {
  SimulationScenario sc;
  sc.S = 20;
  sc.T = 6;
  sc.surfaces = {Surface::NonseparableA(), Surface::NonseparableB()};
  sc.noise_sd = 0.0;
  sc.seed = 5;
  const auto gen = generate(sc);
  for (Eigen::Index j = 0; j < gen.panel.n_locations(); ++j)
    for (Eigen::Index i = 0; i < gen.panel.n_times(); ++i) {
      double expect = 0.0;
      for (int r = 0; r < 2; ++r)
        expect += gen.truth[static_cast<std::size_t>(r)](j, i) *
                  gen.panel.covariates[static_cast<std::size_t>(r)](j, i);
      CHECK(gen.panel.response(j, i) == doctest::Approx(expect).epsilon(1e-15));
    }
}

TEST_CASE("generate: paper-scale scenario dimensions") {
  const auto sc = SimulationScenario::paper_default(3);
  CHECK(sc.S == 300);
  CHECK(sc.T == 15);
  CHECK(sc.R() == 2);
  const auto gen = generate(sc);
  CHECK(gen.panel.n_locations() == 300);
  CHECK(gen.panel.n_times() == 15);
  CHECK(gen.panel.covariates[0].minCoeff() == 1.0);  // intercept predictor
  for (const auto& p : gen.panel.locations) {
    CHECK(p.x >= 0.0);
    CHECK(p.x <= 1.0);
    CHECK(p.y >= 0.0);
    CHECK(p.y <= 1.0);
  }
}

TEST_CASE("generate: same seed bit-identical, different seed different") {
  SimulationScenario sc;
  sc.S = 30;
  sc.T = 5;
  sc.surfaces = {Surface::NonseparableA()};
  sc.noise_sd = 0.3;
  sc.seed = 11;
  const auto a = generate(sc);
  const auto b = generate(sc);
  CHECK((a.panel.response - b.panel.response).cwiseAbs().maxCoeff() == 0.0);
  sc.seed = 12;
  const auto c = generate(sc);
  CHECK((a.panel.response - c.panel.response).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("generate: noise variance moment check within 2% over 1e5 cells") {
  SimulationScenario sc;
  sc.S = 1000;
  sc.T = 100;
  sc.surfaces = {Surface::Constant(2.0)};
  sc.noise_sd = 0.7;
  sc.seed = 21;
  const auto gen = generate(sc);
  double ss = 0.0;
  std::size_t n = 0;
  for (Eigen::Index j = 0; j < gen.panel.n_locations(); ++j)
    for (Eigen::Index i = 0; i < gen.panel.n_times(); ++i, ++n) {
      const double resid = gen.panel.response(j, i) - 2.0;
      ss += resid * resid;
    }
  const double var = ss / static_cast<double>(n);
  CHECK(var == doctest::Approx(0.49).epsilon(0.02));
}

TEST_CASE("noise_sd_for_snr: achieves the requested ratio") {
  SimulationScenario sc;
  sc.S = 100;
  sc.T = 10;
  sc.surfaces = {Surface::NonseparableA(), Surface::NonseparableB()};
  sc.seed = 31;
  const double sd = noise_sd_for_snr(sc, 4.0);
  sc.noise_sd = 0.0;
  const auto gen = generate(sc);
  CHECK(gen.signal_sd / sd == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("score_recovery: perfect fit scores 0, mean-only scores 1") {
  SimulationScenario sc;
  sc.S = 25;
  sc.T = 5;
  sc.surfaces = {Surface::NonseparableA()};
  sc.noise_sd = 0.0;
  sc.seed = 41;
  const auto gen = generate(sc);

  // A zero fit scored against a centered truth surface gives
  // ||0 - g|| / ||g - mean(g)|| = 1 exactly; against a zero truth it gives 0.
  FittedModel zero;
  zero.layout.R = 1;
  zero.layout.M = 1;
  zero.layout.N = 1;
  zero.layout.interaction = true;
  zero.knots.temporal = {1.0};
  zero.knots.spatial = {{0.5, 0.5}};
  zero.theta = Vector::Zero(4);
  zero.u = Vector::Zero(3);

  Matrix centered = gen.truth[0];
  centered.array() -= centered.mean();
  const auto one = score_recovery(zero, {centered}, gen.panel);
  REQUIRE(one.size() == 1);
  CHECK(one[0] == doctest::Approx(1.0).epsilon(1e-12));

  Matrix constant_truth = Matrix::Zero(gen.panel.n_locations(), gen.panel.n_times());
  const auto zero_score = score_recovery(zero, {constant_truth}, gen.panel);
  CHECK(zero_score[0] == 0.0);
}

TEST_CASE("score_recovery: invariant to a common constant shift") {
  SimulationScenario sc;
  sc.S = 15;
  sc.T = 4;
  sc.surfaces = {Surface::NonseparableB()};
  sc.noise_sd = 0.0;
  sc.seed = 51;
  const auto gen = generate(sc);

  FittedModel m;
  m.layout.R = 1;
  m.layout.M = 1;
  m.layout.N = 1;
  m.layout.interaction = true;
  m.knots.temporal = {1.0};
  m.knots.spatial = {{0.5, 0.5}};
  m.theta = Vector::Zero(4);
  m.u = Vector::Zero(3);
  m.theta(0) = 0.4;  // constant fit

  const auto s1 = score_recovery(m, gen.truth, gen.panel);
  FittedModel shifted = m;
  shifted.theta(0) += 5.0;
  std::vector<Matrix> truth_shifted = gen.truth;
  truth_shifted[0].array() += 5.0;
  const auto s2 = score_recovery(shifted, truth_shifted, gen.panel);
  CHECK(s1[0] == doctest::Approx(s2[0]).epsilon(1e-9));
}
