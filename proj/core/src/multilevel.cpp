#include "stvcm/multilevel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "inference_internal.hpp"
#include "reml_internal.hpp"
#include "stvcm/rng.hpp"

namespace stvcm {

SpaceTimePanel MultilevelPanel::provider_panel(Eigen::Index p) const {
  SpaceTimePanel out;
  out.location_ids = location_ids;
  out.locations = locations;
  out.times = times;
  out.response = responses.at(static_cast<std::size_t>(p));
  out.covariates = covariates;
  out.predictor_names = predictor_names;
  return out;
}

SpaceTimePanel MultilevelPanel::pooled_panel() const {
  SpaceTimePanel out;
  const Eigen::Index s = static_cast<Eigen::Index>(locations.size());
  const Eigen::Index t = static_cast<Eigen::Index>(times.size());
  const Eigen::Index p = n_providers();
  out.times = times;
  out.response.resize(p * s, t);
  out.covariates.assign(covariates.size(), Matrix(p * s, t));
  for (Eigen::Index pi = 0; pi < p; ++pi) {
    for (Eigen::Index j = 0; j < s; ++j) {
      out.location_ids.push_back(providers[static_cast<std::size_t>(pi)] + ":" +
                                 location_ids[static_cast<std::size_t>(j)]);
      out.locations.push_back(locations[static_cast<std::size_t>(j)]);
    }
    out.response.middleRows(pi * s, s) = responses[static_cast<std::size_t>(pi)];
    for (std::size_t r = 0; r < covariates.size(); ++r)
      out.covariates[r].middleRows(pi * s, s) = covariates[r];
  }
  out.predictor_names = predictor_names;
  return out;
}

void MultilevelPanel::validate() const {
  if (providers.size() < 2)
    throw Error(ErrorKind::validation, "multilevel panel needs at least two providers");
  if (responses.size() != providers.size())
    throw Error(ErrorKind::validation, "multilevel panel: one response grid per provider");
  for (const auto& y : responses)
    if (y.rows() != static_cast<Eigen::Index>(locations.size()) ||
        y.cols() != static_cast<Eigen::Index>(times.size()))
      throw Error(ErrorKind::validation, "provider grids are mismatched");
  provider_panel(0).validate();
}

std::string MultilevelLayout::predictor_label(int r) const {
  if (r >= 0 && static_cast<std::size_t>(r) < predictor_names.size() &&
      !predictor_names[static_cast<std::size_t>(r)].empty())
    return predictor_names[static_cast<std::size_t>(r)];
  return "x" + std::to_string(r + 1);
}

Matrix helmert_basis(int p) {
  Matrix h = Matrix::Zero(p, p - 1);
  for (int k = 1; k < p; ++k) {
    const double norm = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
    for (int i = 0; i < k; ++i) h(i, k - 1) = norm;
    h(k, k - 1) = -static_cast<double>(k) * norm;
  }
  return h;
}

namespace {

struct StackedDesign {
  Matrix x;
  Matrix z;
  Vector y;
  std::vector<RandomBlock> blocks;
  int n_components = 0;
};

double eval_spatial_kernel(const DesignOptions& opts, const Point& s, const Point& knot) {
  return opts.spatial_kernel == SpatialKernelKind::thin_plate
             ? spatial_kernel(s, knot)
             : spatial_kernel_matern32(s, knot, opts.matern_range);
}

StackedDesign build_stacked(const MultilevelPanel& panel, const KnotLayout& knots,
                            const MultilevelLayout& lay, const Matrix& helmert,
                            const DesignOptions& dopts) {
  const int s = static_cast<int>(panel.locations.size());
  const int t = static_cast<int>(panel.times.size());
  const int r_cnt = lay.R;

  // Rows: provider-major, then location, then time; missing cells dropped.
  std::vector<std::array<int, 3>> rows;
  for (int p = 0; p < lay.P; ++p)
    for (int j = 0; j < s; ++j)
      for (int i = 0; i < t; ++i)
        if (!std::isnan(panel.responses[static_cast<std::size_t>(p)](j, i)))
          rows.push_back({p, j, i});

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  StackedDesign d;
  d.x = Matrix::Zero(n, lay.fixed_cols());
  d.z = Matrix::Zero(n, lay.random_cols());
  d.y.resize(n);

  // Kernel tables for the global family and each provider family.
  const int m = lay.M, nn = lay.N;
  auto temporal_table = [&](const std::vector<double>& kn) {
    Matrix kt(t, m);
    for (int i = 0; i < t; ++i)
      for (int mm = 0; mm < m; ++mm)
        kt(i, mm) = temporal_kernel(panel.times[static_cast<std::size_t>(i)],
                                    kn[static_cast<std::size_t>(mm)]);
    return kt;
  };
  auto spatial_table = [&](const std::vector<Point>& kn) {
    Matrix ks(s, nn);
    for (int j = 0; j < s; ++j)
      for (int k = 0; k < nn; ++k)
        ks(j, k) = eval_spatial_kernel(dopts, panel.locations[static_cast<std::size_t>(j)],
                                       kn[static_cast<std::size_t>(k)]);
    return ks;
  };
  const Matrix kt0 = temporal_table(knots.temporal);
  const Matrix ks0 = spatial_table(knots.spatial);
  std::vector<Matrix> ktp, ksp;
  if (lay.deviations) {
    for (int p = 0; p < lay.P; ++p) {
      ktp.push_back(temporal_table(knots.provider_temporal[static_cast<std::size_t>(p)]));
      ksp.push_back(spatial_table(knots.provider_spatial[static_cast<std::size_t>(p)]));
    }
  }

  for (Eigen::Index row = 0; row < n; ++row) {
    const auto [p, j, i] = rows[static_cast<std::size_t>(row)];
    d.y(row) = panel.responses[static_cast<std::size_t>(p)](j, i);
    const double tv = panel.times[static_cast<std::size_t>(i)];
    const Point& sv = panel.locations[static_cast<std::size_t>(j)];
    const double basis[4] = {1.0, tv, sv.x, sv.y};
    for (int r = 0; r < r_cnt; ++r) {
      const double x = panel.covariates[static_cast<std::size_t>(r)](j, i);
      for (int g = 0; g < 4; ++g) d.x(row, lay.global_fixed(r, g)) = x * basis[g];
      if (lay.deviations)
        for (int g = 0; g < 4; ++g)
          for (int k = 0; k < lay.P - 1; ++k)
            d.x(row, lay.dev_fixed(r, g, k)) = helmert(p, k) * x * basis[g];
      for (int mm = 0; mm < m; ++mm) d.z(row, lay.global_temporal(r) + mm) = x * kt0(i, mm);
      for (int k = 0; k < nn; ++k) d.z(row, lay.global_spatial(r) + k) = x * ks0(j, k);
      if (lay.deviations) {
        const Matrix& ktP = ktp[static_cast<std::size_t>(p)];
        const Matrix& ksP = ksp[static_cast<std::size_t>(p)];
        for (int mm = 0; mm < m; ++mm) d.z(row, lay.dev_temporal(p, r) + mm) = x * ktP(i, mm);
        for (int k = 0; k < nn; ++k) d.z(row, lay.dev_spatial(p, r) + k) = x * ksP(j, k);
        const int i0 = lay.dev_interaction(p, r);
        for (int mm = 0; mm < m; ++mm)
          for (int k = 0; k < nn; ++k)
            d.z(row, i0 + mm * nn + k) = x * ktP(i, mm) * ksP(j, k);
      }
    }
  }

  // Component blocks: global per predictor, then shared deviation components.
  for (int r = 0; r < r_cnt; ++r) {
    d.blocks.push_back({2 * r + 0, lay.global_temporal(r), lay.global_temporal(r) + m});
    d.blocks.push_back({2 * r + 1, lay.global_spatial(r), lay.global_spatial(r) + nn});
  }
  if (lay.deviations) {
    for (int p = 0; p < lay.P; ++p)
      for (int r = 0; r < r_cnt; ++r) {
        d.blocks.push_back({2 * r_cnt + 3 * r + 0, lay.dev_temporal(p, r), lay.dev_temporal(p, r) + m});
        d.blocks.push_back({2 * r_cnt + 3 * r + 1, lay.dev_spatial(p, r), lay.dev_spatial(p, r) + nn});
        d.blocks.push_back({2 * r_cnt + 3 * r + 2, lay.dev_interaction(p, r),
                            lay.dev_interaction(p, r) + m * nn});
      }
  }
  d.n_components = lay.n_components();
  return d;
}

}  // namespace

MultilevelFit fit_multilevel(const MultilevelPanel& panel, const KnotLayout& knots,
                             const MultilevelOptions& opts) {
  panel.validate();
  const int p_cnt = static_cast<int>(panel.n_providers());
  if (opts.deviations) {
    if (static_cast<int>(knots.provider_count()) != p_cnt)
      throw Error(ErrorKind::identifiability,
                  "knot layout must carry one provider family per provider (have " +
                      std::to_string(knots.provider_count()) + ", need " +
                      std::to_string(p_cnt) + "); use separate_knots()");
    knots.validate();  // rejects separation violations with the offending pairs
  }

  MultilevelLayout lay;
  lay.R = static_cast<int>(panel.covariates.size());
  lay.M = static_cast<int>(knots.temporal.size());
  lay.N = static_cast<int>(knots.spatial.size());
  lay.P = p_cnt;
  lay.predictor_names = panel.predictor_names;
  lay.deviations = opts.deviations;

  const Matrix helmert = lay.deviations ? helmert_basis(p_cnt) : Matrix();
  StackedDesign sd = build_stacked(panel, knots, lay, helmert, opts.design);

  RawFit raw = fit_reml_raw(sd.x, sd.z, sd.blocks, sd.n_components, sd.y, opts.reml);

  MultilevelFit fit;
  fit.layout = lay;
  fit.knots = knots;
  fit.design_options = opts.design;
  fit.providers = panel.providers;
  fit.theta_global = raw.fixed_effects.head(lay.global_fixed_cols());
  fit.theta_dev = Matrix::Zero(p_cnt, 4 * lay.R);
  if (lay.deviations) {
    for (int r = 0; r < lay.R; ++r)
      for (int g = 0; g < 4; ++g) {
        Vector free(p_cnt - 1);
        for (int k = 0; k < p_cnt - 1; ++k) free(k) = raw.fixed_effects(lay.dev_fixed(r, g, k));
        fit.theta_dev.col(r * 4 + g) = helmert * free;
      }
  }
  fit.u_global = raw.random_effects.head(lay.global_random_cols());
  for (int p = 0; p < p_cnt; ++p) {
    if (lay.deviations)
      fit.u_dev.push_back(raw.random_effects.segment(lay.dev_temporal(p, 0),
                                                     lay.dev_random_per_p()));
    else
      fit.u_dev.push_back(Vector::Zero(lay.dev_random_per_p()));
  }

  fit.sigma_eps2 = raw.sigma_eps2;
  for (int r = 0; r < lay.R; ++r) {
    fit.global_T2.push_back(raw.sigma2[static_cast<std::size_t>(2 * r + 0)]);
    fit.global_S2.push_back(raw.sigma2[static_cast<std::size_t>(2 * r + 1)]);
    if (lay.deviations) {
      fit.dev_T2.push_back(raw.sigma2[static_cast<std::size_t>(2 * lay.R + 3 * r + 0)]);
      fit.dev_S2.push_back(raw.sigma2[static_cast<std::size_t>(2 * lay.R + 3 * r + 1)]);
      fit.dev_I2.push_back(raw.sigma2[static_cast<std::size_t>(2 * lay.R + 3 * r + 2)]);
    } else {
      fit.dev_T2.push_back(0.0);
      fit.dev_S2.push_back(0.0);
      fit.dev_I2.push_back(0.0);
    }
  }
  const double floor = opts.reml.variance_floor;
  auto flag = [&](double v, const std::string& name) {
    if (v > 0 && v <= floor * (1.0 + 1e-9)) fit.boundary.push_back(name);
  };
  flag(fit.sigma_eps2, "sigma_eps2");
  for (int r = 0; r < lay.R; ++r) {
    const std::string tag = lay.predictor_label(r);
    flag(fit.global_T2[static_cast<std::size_t>(r)], "global_T2[" + tag + "]");
    flag(fit.global_S2[static_cast<std::size_t>(r)], "global_S2[" + tag + "]");
    if (lay.deviations) {
      flag(fit.dev_T2[static_cast<std::size_t>(r)], "dev_T2[" + tag + "]");
      flag(fit.dev_S2[static_cast<std::size_t>(r)], "dev_S2[" + tag + "]");
      flag(fit.dev_I2[static_cast<std::size_t>(r)], "dev_I2[" + tag + "]");
    }
  }

  fit.loglik_reml = raw.loglik_reml;
  fit.convergence = raw.convergence;
  fit.constraints_residual = lay.deviations ? fit.theta_dev.colwise().sum().cwiseAbs().maxCoeff() : 0.0;
  fit.ata = std::move(raw.ata);
  fit.aty = std::move(raw.aty);
  fit.yty = raw.yty;
  fit.n_rows = raw.n;
  fit.blocks = raw.blocks;
  fit.sigma2_by_component = raw.sigma2;
  fit.observed_times = panel.times;
  fit.observed_locations = panel.locations;
  return fit;
}

CoefficientParts MultilevelFit::global_parts(int r, std::span<const double> times,
                                             std::span<const Point> points) const {
  if (r < 0 || r >= layout.R)
    throw Error(ErrorKind::config, "global_parts: predictor index out of range");
  if (times.size() != points.size() || times.empty())
    throw Error(ErrorKind::config, "global_parts: grid must pair times with points");
  const int g = static_cast<int>(times.size());
  CoefficientParts parts;
  parts.temporal.resize(g);
  parts.spatial.resize(g);
  parts.interaction = Vector::Zero(g);
  parts.total.resize(g);
  for (int i = 0; i < g; ++i) {
    const double t = times[static_cast<std::size_t>(i)];
    const Point& s = points[static_cast<std::size_t>(i)];
    double temporal = theta_global(layout.global_fixed(r, 0)) +
                      theta_global(layout.global_fixed(r, 1)) * t;
    for (int m = 0; m < layout.M; ++m)
      temporal += u_global(layout.global_temporal(r) + m) *
                  temporal_kernel(t, knots.temporal[static_cast<std::size_t>(m)]);
    double spatial = theta_global(layout.global_fixed(r, 2)) * s.x +
                     theta_global(layout.global_fixed(r, 3)) * s.y;
    for (int n = 0; n < layout.N; ++n)
      spatial += u_global(layout.global_spatial(r) + n) *
                 eval_spatial_kernel(design_options, s, knots.spatial[static_cast<std::size_t>(n)]);
    parts.temporal(i) = temporal;
    parts.spatial(i) = spatial;
    parts.total(i) = temporal + spatial;
  }
  return parts;
}

CoefficientParts MultilevelFit::deviation_parts(int r, int p, std::span<const double> times,
                                                std::span<const Point> points) const {
  if (r < 0 || r >= layout.R)
    throw Error(ErrorKind::config, "deviation_parts: predictor index out of range");
  if (p < 0 || p >= layout.P)
    throw Error(ErrorKind::config, "deviation_parts: provider index out of range");
  const int g = static_cast<int>(times.size());
  CoefficientParts parts;
  parts.temporal.resize(g);
  parts.spatial.resize(g);
  parts.interaction.resize(g);
  parts.total.resize(g);
  const auto& kt = knots.provider_temporal.at(static_cast<std::size_t>(p));
  const auto& ks = knots.provider_spatial.at(static_cast<std::size_t>(p));
  const Vector& ud = u_dev.at(static_cast<std::size_t>(p));
  const int base = layout.dev_temporal(p, 0);
  for (int i = 0; i < g; ++i) {
    const double t = times[static_cast<std::size_t>(i)];
    const Point& s = points[static_cast<std::size_t>(i)];
    double temporal = theta_dev(p, r * 4 + 0) + theta_dev(p, r * 4 + 1) * t;
    for (int m = 0; m < layout.M; ++m)
      temporal += ud(layout.dev_temporal(p, r) - base + m) *
                  temporal_kernel(t, kt[static_cast<std::size_t>(m)]);
    double spatial = theta_dev(p, r * 4 + 2) * s.x + theta_dev(p, r * 4 + 3) * s.y;
    for (int n = 0; n < layout.N; ++n)
      spatial += ud(layout.dev_spatial(p, r) - base + n) *
                 eval_spatial_kernel(design_options, s, ks[static_cast<std::size_t>(n)]);
    double inter = 0.0;
    for (int m = 0; m < layout.M; ++m) {
      const double ktv = temporal_kernel(t, kt[static_cast<std::size_t>(m)]);
      for (int n = 0; n < layout.N; ++n)
        inter += ud(layout.dev_interaction(p, r) - base + m * layout.N + n) * ktv *
                 eval_spatial_kernel(design_options, s, ks[static_cast<std::size_t>(n)]);
    }
    parts.temporal(i) = temporal;
    parts.spatial(i) = spatial;
    parts.interaction(i) = inter;
    parts.total(i) = temporal + spatial + inter;
  }
  return parts;
}

namespace {

// Full-row contrast for gamma_rp or eta_rp at one (t, s); fixed columns
// first, matching the stacked coefficient order.
void provider_contrast_row(const MultilevelFit& fit, int r, int p, double t, const Point& s,
                           bool include_global, bool temporal_part, bool spatial_part,
                           bool interaction_part, Eigen::Ref<Eigen::RowVectorXd> row) {
  const MultilevelLayout& lay = fit.layout;
  const Matrix h = helmert_basis(lay.P);
  row.setZero();
  const double basis[4] = {1.0, t, s.x, s.y};
  if (include_global) {
    if (temporal_part) {
      row(lay.global_fixed(r, 0)) = 1.0;
      row(lay.global_fixed(r, 1)) = t;
      for (int m = 0; m < lay.M; ++m)
        row(lay.fixed_cols() + lay.global_temporal(r) + m) =
            temporal_kernel(t, fit.knots.temporal[static_cast<std::size_t>(m)]);
    }
    if (spatial_part) {
      row(lay.global_fixed(r, 2)) = s.x;
      row(lay.global_fixed(r, 3)) = s.y;
      for (int n = 0; n < lay.N; ++n)
        row(lay.fixed_cols() + lay.global_spatial(r) + n) =
            eval_spatial_kernel(fit.design_options, s,
                                fit.knots.spatial[static_cast<std::size_t>(n)]);
    }
  }
  if (!lay.deviations) return;
  const auto& kt = fit.knots.provider_temporal.at(static_cast<std::size_t>(p));
  const auto& ks = fit.knots.provider_spatial.at(static_cast<std::size_t>(p));
  if (temporal_part) {
    for (int g : {0, 1})
      for (int k = 0; k < lay.P - 1; ++k)
        row(lay.dev_fixed(r, g, k)) = h(p, k) * basis[g];
    for (int m = 0; m < lay.M; ++m)
      row(lay.fixed_cols() + lay.dev_temporal(p, r) + m) =
          temporal_kernel(t, kt[static_cast<std::size_t>(m)]);
  }
  if (spatial_part) {
    for (int g : {2, 3})
      for (int k = 0; k < lay.P - 1; ++k)
        row(lay.dev_fixed(r, g, k)) = h(p, k) * basis[g];
    for (int n = 0; n < lay.N; ++n)
      row(lay.fixed_cols() + lay.dev_spatial(p, r) + n) =
          eval_spatial_kernel(fit.design_options, s, ks[static_cast<std::size_t>(n)]);
  }
  if (interaction_part) {
    for (int m = 0; m < lay.M; ++m) {
      const double ktv = temporal_kernel(t, kt[static_cast<std::size_t>(m)]);
      for (int n = 0; n < lay.N; ++n)
        row(lay.fixed_cols() + lay.dev_interaction(p, r) + m * lay.N + n) =
            ktv * eval_spatial_kernel(fit.design_options, s, ks[static_cast<std::size_t>(n)]);
    }
  }
}

Vector stacked_coef(const MultilevelFit& fit) {
  const MultilevelLayout& lay = fit.layout;
  Vector coef = Vector::Zero(lay.n_coefs());
  coef.head(lay.global_fixed_cols()) = fit.theta_global;
  if (lay.deviations) {
    // Re-map expanded deviations back to free coefficients: H' theta (H is
    // orthonormal, so the free coefficients are exact projections).
    const Matrix h = helmert_basis(lay.P);
    for (int r = 0; r < lay.R; ++r)
      for (int g = 0; g < 4; ++g) {
        Vector free = h.transpose() * fit.theta_dev.col(r * 4 + g);
        for (int k = 0; k < lay.P - 1; ++k) coef(lay.dev_fixed(r, g, k)) = free(k);
      }
  }
  coef.segment(lay.fixed_cols(), lay.global_random_cols()) = fit.u_global;
  if (lay.deviations)
    for (int p = 0; p < lay.P; ++p)
      coef.segment(lay.fixed_cols() + lay.dev_temporal(p, 0), lay.dev_random_per_p()) =
          fit.u_dev[static_cast<std::size_t>(p)];
  return coef;
}

}  // namespace

Vector MultilevelFit::provider_coefficient(int r, int p, std::span<const double> times,
                                           std::span<const Point> points) const {
  if (times.size() != points.size() || times.empty())
    throw Error(ErrorKind::config, "provider_coefficient: grid must pair times with points");
  const Vector coef = stacked_coef(*this);
  Vector out(static_cast<Eigen::Index>(times.size()));
  Eigen::RowVectorXd row(layout.n_coefs());
  for (std::size_t i = 0; i < times.size(); ++i) {
    provider_contrast_row(*this, r, p, times[i], points[i], true, true, true, true, row);
    out(static_cast<Eigen::Index>(i)) = row.dot(coef);
  }
  return out;
}

KnotLayout separate_knots(const KnotLayout& base, int providers, double d_T, double d_S,
                          std::uint64_t seed) {
  if (providers < 1) throw Error(ErrorKind::config, "separate_knots: providers must be >= 1");
  if (!(d_T > 0.0) || !(d_S > 0.0))
    throw Error(ErrorKind::config, "separate_knots: separations must be > 0");
  if (base.temporal.empty() || base.spatial.empty())
    throw Error(ErrorKind::validation, "separate_knots: base layout has no knots");

  // Feasibility: same-knot cross-family gaps equal the offset step, and
  // different-knot gaps shrink by at most P * step, so we need
  // step > d and min_spacing > P * step + d.
  auto pick_step = [&](double d, double min_spacing, const char* what) {
    double step = 2.0 * d;
    if (std::isfinite(min_spacing)) {
      const double cap = 0.999 * (min_spacing - d) / providers;
      step = std::min(step, cap);
    }
    if (!(step > d)) {
      std::ostringstream os;
      os << "separate_knots: cannot separate " << what << " families by d=" << d
         << " with knot spacing " << min_spacing << " and " << providers
         << " providers; reduce the knot count (M, N) or the separation d";
      throw Error(ErrorKind::identifiability, os.str());
    }
    return step;
  };

  double min_temporal_spacing = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < base.temporal.size(); ++i)
    min_temporal_spacing = std::min(min_temporal_spacing, base.temporal[i] - base.temporal[i - 1]);
  double min_spatial_spacing = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < base.spatial.size(); ++i)
    for (std::size_t j = i + 1; j < base.spatial.size(); ++j)
      min_spatial_spacing = std::min(min_spatial_spacing, distance(base.spatial[i], base.spatial[j]));

  const double step_t = pick_step(d_T, min_temporal_spacing, "temporal");
  const double step_s = pick_step(d_S, min_spatial_spacing, "spatial");

  Rng rng = Rng::from_seed(seed).child("separate-knots");
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ux = std::cos(angle), uy = std::sin(angle);

  KnotLayout out = base;
  out.provider_temporal.clear();
  out.provider_spatial.clear();
  out.min_temporal_sep = d_T;
  out.min_spatial_sep = d_S;
  out.seed = seed;
  for (int p = 1; p <= providers; ++p) {
    std::vector<double> tf;
    for (double k : base.temporal) tf.push_back(k + p * step_t);
    std::vector<Point> sf;
    for (const Point& k : base.spatial)
      sf.push_back({k.x + p * step_s * ux, k.y + p * step_s * uy});
    out.provider_temporal.push_back(std::move(tf));
    out.provider_spatial.push_back(std::move(sf));
  }
  out.validate();  // exhaustive certification
  return out;
}

std::vector<ConfidenceBand> joint_bands(const MultilevelFit& fit, int predictor, BandPart part,
                                        double rho, const EvalGrid& grid, int n_draws,
                                        std::uint64_t seed, bool on_total, int threads) {
  if (!(rho > 0.0 && rho < 1.0))
    throw Error(ErrorKind::config, "joint_bands: rho must lie in (0, 1)");
  if (part == BandPart::full)
    throw Error(ErrorKind::config, "joint_bands: part must be temporal or spatial");
  if (predictor < 0 || predictor >= fit.layout.R)
    throw Error(ErrorKind::config, "joint_bands: predictor index out of range");
  grid.validate();
  if (part == BandPart::temporal && grid.mode != EvalGrid::Mode::temporal)
    throw Error(ErrorKind::config, "joint_bands: temporal part needs a temporal grid");
  if (part == BandPart::spatial && grid.mode != EvalGrid::Mode::spatial)
    throw Error(ErrorKind::config, "joint_bands: spatial part needs a spatial grid");

  const double gamma_each = rho / fit.layout.P;
  const Vector coef = stacked_coef(fit);
  const int g = static_cast<int>(grid.size());

  std::vector<ConfidenceBand> bands;
  for (int p = 0; p < fit.layout.P; ++p) {
    Matrix contrast = Matrix::Zero(g, fit.layout.n_coefs());
    Eigen::RowVectorXd row(fit.layout.n_coefs());
    for (int gi = 0; gi < g; ++gi) {
      const double t = part == BandPart::temporal ? grid.times[static_cast<std::size_t>(gi)] : 0.0;
      const Point s = part == BandPart::spatial ? grid.points[static_cast<std::size_t>(gi)] : Point{};
      provider_contrast_row(fit, predictor, p, t, s, on_total,
                            part == BandPart::temporal, part == BandPart::spatial, false, row);
      contrast.row(gi) = row;
    }
    Vector center = contrast * coef;
    const std::uint64_t band_seed = Rng::from_seed(seed).child("joint-band").child(
        static_cast<std::uint64_t>(p)).key();
    bands.push_back(detail::simulate_band(fit.ata, fit.layout.fixed_cols(), fit.blocks,
                                          fit.sigma2_by_component, fit.sigma_eps2, contrast,
                                          center, grid, gamma_each, n_draws, band_seed,
                                          threads));
  }
  return bands;
}

}  // namespace stvcm
