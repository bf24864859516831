#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stvcm/mixed_model.hpp"
#include "stvcm/types.hpp"

namespace stvcm {

// Closed-form coefficient surface gamma(t, s). Time enters normalized by the
// panel's largest time so the shapes are scale-free.
struct Surface {
  enum class Kind {
    constant,         // params: {c}
    linear_t,         // params: {a, b}: a + b t
    sin_t,            // params: {amp, cycles}: amp * sin(2 pi cycles t / t_max)
    nonseparable_a,   // sin(pi t/t_max) cos(2 pi s1) + (t/t_max) s2
    nonseparable_b,   // exp(-|s - (.5,.5)|) (1 + t/t_max)
    separable_demo,   // sin(pi t/t_max) + s1 - s2
  };
  Kind kind = Kind::constant;
  std::vector<double> params;

  double eval(double t, double t_max, const Point& s) const;

  static Surface Constant(double c) { return {Kind::constant, {c}}; }
  static Surface LinearT(double a, double b) { return {Kind::linear_t, {a, b}}; }
  static Surface SinT(double amp, double cycles) { return {Kind::sin_t, {amp, cycles}}; }
  static Surface NonseparableA() { return {Kind::nonseparable_a, {}}; }
  static Surface NonseparableB() { return {Kind::nonseparable_b, {}}; }
};

const char* surface_kind_name(Surface::Kind k);
Surface::Kind surface_kind_from_name(const std::string& name);

struct SimulationScenario {
  int S = 300;
  int T = 15;
  std::vector<Surface> surfaces;  // one per predictor; size R
  double noise_sd = 0.1;
  // Predictor 1 is the all-ones intercept; further predictors are iid
  // standard normal draws.
  std::uint64_t seed = 1;

  int R() const { return static_cast<int>(surfaces.size()); }
  void validate() const;

  // The verification scenario: two predictors with nonseparable surfaces on
  // an S=300 x T=15 grid.
  static SimulationScenario paper_default(std::uint64_t seed);
};

struct GeneratedPanel {
  SpaceTimePanel panel;
  std::vector<Matrix> truth;  // per predictor, S x T coefficient surfaces
  double signal_sd = 0.0;     // sd of the noiseless response over the grid
};

// Uniform locations on the unit square, times 1..T, covariates per the
// scenario law, Y = sum_r gamma_r X_r + N(0, noise_sd^2). Bit-reproducible
// for a given seed.
GeneratedPanel generate(const SimulationScenario& scenario);

// Noise level giving Var(signal)/Var(noise) = snr on this scenario's draw.
double noise_sd_for_snr(const SimulationScenario& scenario, double snr);

// Per-predictor relative RMSE on the panel grid:
// ||ghat_r - g_r|| / ||g_r - mean(g_r)||.
std::vector<double> score_recovery(const FittedModel& fit, const std::vector<Matrix>& truth,
                                   const SpaceTimePanel& panel);

}  // namespace stvcm
