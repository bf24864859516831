#include "stvcm/simulate.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "stvcm/rng.hpp"

namespace stvcm {

double Surface::eval(double t, double t_max, const Point& s) const {
  const double tn = t_max != 0.0 ? t / t_max : t;
  switch (kind) {
    case Kind::constant:
      return params.at(0);
    case Kind::linear_t:
      return params.at(0) + params.at(1) * t;
    case Kind::sin_t:
      return params.at(0) * std::sin(2.0 * std::numbers::pi * params.at(1) * tn);
    case Kind::nonseparable_a:
      return std::sin(std::numbers::pi * tn) * std::cos(2.0 * std::numbers::pi * s.x) +
             tn * s.y;
    case Kind::nonseparable_b:
      return std::exp(-std::hypot(s.x - 0.5, s.y - 0.5)) * (1.0 + tn);
    case Kind::separable_demo:
      return std::sin(std::numbers::pi * tn) + s.x - s.y;
  }
  throw Error(ErrorKind::config, "unknown surface kind");
}

const char* surface_kind_name(Surface::Kind k) {
  switch (k) {
    case Surface::Kind::constant: return "constant";
    case Surface::Kind::linear_t: return "linear-t";
    case Surface::Kind::sin_t: return "sin-t";
    case Surface::Kind::nonseparable_a: return "nonseparable-a";
    case Surface::Kind::nonseparable_b: return "nonseparable-b";
    case Surface::Kind::separable_demo: return "separable-demo";
  }
  return "unknown";
}

Surface::Kind surface_kind_from_name(const std::string& name) {
  if (name == "constant") return Surface::Kind::constant;
  if (name == "linear-t") return Surface::Kind::linear_t;
  if (name == "sin-t") return Surface::Kind::sin_t;
  if (name == "nonseparable-a") return Surface::Kind::nonseparable_a;
  if (name == "nonseparable-b") return Surface::Kind::nonseparable_b;
  if (name == "separable-demo") return Surface::Kind::separable_demo;
  throw Error(ErrorKind::config, "unknown surface kind: " + name);
}

void SimulationScenario::validate() const {
  if (S < 1 || T < 1) throw Error(ErrorKind::config, "scenario needs S >= 1 and T >= 1");
  if (surfaces.empty()) throw Error(ErrorKind::config, "scenario needs at least one surface");
  if (noise_sd < 0.0) throw Error(ErrorKind::config, "noise_sd must be >= 0");
}

SimulationScenario SimulationScenario::paper_default(std::uint64_t seed) {
  SimulationScenario sc;
  sc.S = 300;
  sc.T = 15;
  sc.surfaces = {Surface::NonseparableA(), Surface::NonseparableB()};
  sc.noise_sd = 0.1;
  sc.seed = seed;
  return sc;
}

GeneratedPanel generate(const SimulationScenario& scenario) {
  scenario.validate();
  const int s_cnt = scenario.S, t_cnt = scenario.T, r_cnt = scenario.R();

  GeneratedPanel out;
  SpaceTimePanel& panel = out.panel;
  Rng root = Rng::from_seed(scenario.seed);

  Rng loc_rng = root.child("locations");
  panel.locations.resize(static_cast<std::size_t>(s_cnt));
  panel.location_ids.resize(static_cast<std::size_t>(s_cnt));
  for (int j = 0; j < s_cnt; ++j) {
    panel.locations[static_cast<std::size_t>(j)] = {loc_rng.uniform01(), loc_rng.uniform01()};
    panel.location_ids[static_cast<std::size_t>(j)] = "s" + std::to_string(j + 1);
  }
  panel.times.resize(static_cast<std::size_t>(t_cnt));
  for (int i = 0; i < t_cnt; ++i) panel.times[static_cast<std::size_t>(i)] = i + 1;
  const double t_max = panel.times.back();

  Rng cov_rng = root.child("covariates");
  panel.covariates.assign(static_cast<std::size_t>(r_cnt), Matrix(s_cnt, t_cnt));
  panel.predictor_names.resize(static_cast<std::size_t>(r_cnt));
  for (int r = 0; r < r_cnt; ++r) {
    panel.predictor_names[static_cast<std::size_t>(r)] = "x" + std::to_string(r + 1);
    for (int j = 0; j < s_cnt; ++j)
      for (int i = 0; i < t_cnt; ++i)
        panel.covariates[static_cast<std::size_t>(r)](j, i) = r == 0 ? 1.0 : cov_rng.normal();
  }

  out.truth.assign(static_cast<std::size_t>(r_cnt), Matrix(s_cnt, t_cnt));
  Matrix signal(s_cnt, t_cnt);
  signal.setZero();
  for (int r = 0; r < r_cnt; ++r)
    for (int j = 0; j < s_cnt; ++j)
      for (int i = 0; i < t_cnt; ++i) {
        const double g = scenario.surfaces[static_cast<std::size_t>(r)].eval(
            panel.times[static_cast<std::size_t>(i)], t_max,
            panel.locations[static_cast<std::size_t>(j)]);
        out.truth[static_cast<std::size_t>(r)](j, i) = g;
        signal(j, i) += g * panel.covariates[static_cast<std::size_t>(r)](j, i);
      }
  const double mean = signal.mean();
  out.signal_sd = std::sqrt((signal.array() - mean).square().sum() /
                            std::max<double>(1.0, signal.size() - 1));

  Rng noise_rng = root.child("noise");
  panel.response = signal;
  for (int j = 0; j < s_cnt; ++j)
    for (int i = 0; i < t_cnt; ++i)
      panel.response(j, i) += scenario.noise_sd * noise_rng.normal();
  return out;
}

double noise_sd_for_snr(const SimulationScenario& scenario, double snr) {
  if (!(snr > 0.0)) throw Error(ErrorKind::config, "snr must be > 0");
  SimulationScenario probe = scenario;
  probe.noise_sd = 0.0;
  return generate(probe).signal_sd / std::sqrt(snr);
}

std::vector<double> score_recovery(const FittedModel& fit, const std::vector<Matrix>& truth,
                                   const SpaceTimePanel& panel) {
  if (truth.size() != static_cast<std::size_t>(fit.layout.R))
    throw Error(ErrorKind::config, "score_recovery: truth/predictor count mismatch");
  const int s_cnt = static_cast<int>(panel.n_locations());
  const int t_cnt = static_cast<int>(panel.n_times());
  std::vector<double> times;
  std::vector<Point> points;
  times.reserve(static_cast<std::size_t>(s_cnt) * static_cast<std::size_t>(t_cnt));
  for (int j = 0; j < s_cnt; ++j)
    for (int i = 0; i < t_cnt; ++i) {
      times.push_back(panel.times[static_cast<std::size_t>(i)]);
      points.push_back(panel.locations[static_cast<std::size_t>(j)]);
    }
  std::vector<double> scores;
  for (int r = 0; r < fit.layout.R; ++r) {
    const auto parts = evaluate_coefficient(fit, r, times, points);
    double num = 0.0, den = 0.0;
    const Matrix& g = truth[static_cast<std::size_t>(r)];
    const double gmean = g.mean();
    std::size_t idx = 0;
    for (int j = 0; j < s_cnt; ++j)
      for (int i = 0; i < t_cnt; ++i, ++idx) {
        const double diff = parts.total(static_cast<Eigen::Index>(idx)) - g(j, i);
        num += diff * diff;
        den += (g(j, i) - gmean) * (g(j, i) - gmean);
      }
    scores.push_back(den > 0.0 ? std::sqrt(num / den)
                               : (num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0));
  }
  return scores;
}

}  // namespace stvcm
