#include "stvcm/inference.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "inference_internal.hpp"
#include "reml_internal.hpp"
#include "stvcm/parallel.hpp"
#include "stvcm/rng.hpp"

namespace stvcm {

EvalGrid EvalGrid::Temporal(std::vector<double> ts) {
  EvalGrid g;
  g.mode = Mode::temporal;
  g.times = std::move(ts);
  return g;
}

EvalGrid EvalGrid::Spatial(std::vector<Point> ps) {
  EvalGrid g;
  g.mode = Mode::spatial;
  g.points = std::move(ps);
  return g;
}

EvalGrid EvalGrid::Full(std::vector<double> ts, std::vector<Point> ps) {
  EvalGrid g;
  g.mode = Mode::full;
  g.times = std::move(ts);
  g.points = std::move(ps);
  return g;
}

std::size_t EvalGrid::size() const {
  switch (mode) {
    case Mode::temporal: return times.size();
    case Mode::spatial: return points.size();
    case Mode::full: return times.size();
  }
  return 0;
}

void EvalGrid::validate() const {
  if (size() == 0) throw Error(ErrorKind::config, "evaluation grid is empty");
  if (mode == Mode::full && times.size() != points.size())
    throw Error(ErrorKind::config, "full grid must pair times with points");
  if (mode == Mode::temporal && !points.empty())
    throw Error(ErrorKind::config, "temporal grid must not carry points");
  if (mode == Mode::spatial && !times.empty())
    throw Error(ErrorKind::config, "spatial grid must not carry times");
}

const char* shape_name(Shape s) {
  switch (s) {
    case Shape::constant: return "constant";
    case Shape::linear: return "linear";
    case Shape::nonlinear: return "nonlinear";
  }
  return "unknown";
}

const char* significance_name(Significance s) {
  switch (s) {
    case Significance::positive: return "significantly positive";
    case Significance::negative: return "significantly negative";
    case Significance::not_significant: return "not significant";
  }
  return "unknown";
}

namespace detail {

ConfidenceBand simulate_band(const Matrix& ata, int p, const std::vector<RandomBlock>& blocks,
                             const std::vector<double>& sigma2, double sigma_eps2,
                             const Matrix& contrast, const Vector& center, const EvalGrid& grid,
                             double gamma, int n_draws, std::uint64_t seed, int threads) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw Error(ErrorKind::config, "band level gamma must lie in (0, 1)");
  if (n_draws < 1000) throw Error(ErrorKind::config, "band construction needs n_draws >= 1000");

  std::vector<int> active;
  Matrix c = build_penalized_crossprod(ata, p, blocks, sigma2, sigma_eps2, &active);
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::validation, "singular coefficient covariance in band construction");

  const int g = static_cast<int>(contrast.rows());
  const int d = static_cast<int>(active.size());
  Matrix contrast_act(g, d);
  for (int j = 0; j < d; ++j) contrast_act.col(j) = contrast.col(active[static_cast<std::size_t>(j)]);

  // B' = L^-1 contrast'; then cov(contrast coef) = sigma_eps^2 B B'.
  Matrix bt = contrast_act.transpose();
  llt.matrixL().solveInPlace(bt);
  const double sigma_eps = std::sqrt(sigma_eps2);

  Vector se(g);
  for (int i = 0; i < g; ++i) {
    const double nrm = bt.col(i).norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm))
      throw Error(ErrorKind::validation,
                  "singular coefficient covariance at grid point " + std::to_string(i));
    se(i) = sigma_eps * nrm;
  }

  Rng root = Rng::from_seed(seed).child("band-draws");
  std::vector<double> stats(static_cast<std::size_t>(n_draws));
  parallel_for(static_cast<std::size_t>(n_draws), threads, [&](std::size_t i) {
    Rng rng = root.child(static_cast<std::uint64_t>(i));
    Vector w(d);
    for (int j = 0; j < d; ++j) w(j) = rng.normal();
    double worst = 0.0;
    for (int gi = 0; gi < g; ++gi) {
      const double z = bt.col(gi).dot(w);
      const double nrm = bt.col(gi).norm();
      worst = std::max(worst, std::abs(z) / nrm);
    }
    stats[i] = worst;
  });
  std::sort(stats.begin(), stats.end());
  const int k = static_cast<int>(std::ceil((1.0 - gamma) * n_draws));
  const double crit = stats[static_cast<std::size_t>(std::clamp(k, 1, n_draws) - 1)];

  ConfidenceBand band;
  band.grid = grid;
  band.center = center;
  band.se = se;
  band.level = 1.0 - gamma;
  band.critical_value = crit;
  band.n_draws = n_draws;
  band.seed = seed;
  band.lower = center - crit * se;
  band.upper = center + crit * se;
  return band;
}

namespace {

// Sutherland-Hodgman half-plane clipping in 2-D; closed half-planes, so
// boundary contact stays feasible.
struct Poly2 {
  std::vector<std::array<double, 2>> v;
};

Poly2 clip(const Poly2& poly, double w0, double w1, double rhs, double tol) {
  // Keep points with w0*x + w1*y <= rhs (+tol).
  Poly2 out;
  const std::size_t n = poly.v.size();
  if (n == 0) return out;
  auto val = [&](const std::array<double, 2>& p) { return w0 * p[0] + w1 * p[1] - rhs; };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly.v[i];
    const auto& b = poly.v[(i + 1) % n];
    const double va = val(a), vb = val(b);
    const bool ina = va <= tol, inb = vb <= tol;
    if (ina) out.v.push_back(a);
    if (ina != inb) {
      const double denom = va - vb;
      if (std::abs(denom) > 0) {
        const double t = va / denom;
        out.v.push_back({a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])});
      }
    }
  }
  return out;
}

bool feasible_2d(const std::vector<LinCon>& cons, double box, double tol,
                 std::vector<double>* witness) {
  Poly2 poly;
  poly.v = {{-box, -box}, {box, -box}, {box, box}, {-box, box}};
  for (const auto& c : cons) {
    poly = clip(poly, c.w[0], c.w[1], c.rhs, tol);
    if (poly.v.empty()) return false;
  }
  if (witness) {
    double sx = 0, sy = 0;
    for (const auto& p : poly.v) {
      sx += p[0];
      sy += p[1];
    }
    *witness = {sx / static_cast<double>(poly.v.size()), sy / static_cast<double>(poly.v.size())};
  }
  return true;
}

bool feasible_1d(const std::vector<LinCon>& cons, double box, double tol,
                 std::vector<double>* witness) {
  double lo = -box, hi = box;
  for (const auto& c : cons) {
    const double w = c.w[0];
    if (std::abs(w) < 1e-300) {
      if (0.0 > c.rhs + tol) return false;
      continue;
    }
    if (w > 0)
      hi = std::min(hi, (c.rhs + tol) / w);
    else
      lo = std::max(lo, (c.rhs + tol) / w);
  }
  if (lo > hi) return false;
  if (witness) *witness = {0.5 * (lo + hi)};
  return true;
}

// Fourier-Motzkin elimination of the last variable, then 2-D clipping.
bool feasible_3d(const std::vector<LinCon>& cons, double box, double tol,
                 std::vector<double>* witness) {
  std::vector<LinCon> pos, neg, free2;
  for (const auto& c : cons) {
    const double wz = c.w[2];
    if (wz > 1e-12)
      pos.push_back(c);
    else if (wz < -1e-12)
      neg.push_back(c);
    else
      free2.push_back({{c.w[0], c.w[1]}, c.rhs});
  }
  // z <= (rhs - w0 x - w1 y)/wz for pos; z >= ... for neg. Pair them up.
  std::vector<LinCon> reduced = free2;
  // Box constraints on z participate as one pos (z <= box) and one neg.
  pos.push_back({{0, 0, 1}, box});
  neg.push_back({{0, 0, -1}, box});
  for (const auto& u : pos)
    for (const auto& l : neg) {
      // lower bound from l: z >= (w.x - rhs)/(-wz_l); upper from u.
      // Combined: (l.w0/(-l.wz) + u.w0/u.wz) x + ... <= l.rhs/(-l.wz) + u.rhs/u.wz
      const double a = -l.w[2];  // > 0
      const double b = u.w[2];   // > 0
      LinCon c;
      c.w = {l.w[0] / a + u.w[0] / b, l.w[1] / a + u.w[1] / b};
      c.rhs = l.rhs / a + u.rhs / b;
      reduced.push_back(c);
    }
  std::vector<double> w2;
  if (!feasible_2d(reduced, box, tol, &w2)) return false;
  // Back-substitute z. The projection is exact, so a feasible z exists for
  // the polygon; the centroid can miss by at most the clipping tolerance.
  double zlo = -box, zhi = box;
  for (const auto& u : pos)
    zhi = std::min(zhi, (u.rhs + tol - u.w[0] * w2[0] - u.w[1] * w2[1]) / u.w[2]);
  for (const auto& l : neg)
    zlo = std::max(zlo, (l.rhs + tol - l.w[0] * w2[0] - l.w[1] * w2[1]) / l.w[2]);
  if (witness) *witness = {w2[0], w2[1], 0.5 * (zlo + zhi)};
  return true;
}

}  // namespace

bool linear_feasible(const std::vector<LinCon>& cons, int dim, double box, double tol,
                     std::vector<double>* witness) {
  switch (dim) {
    case 1: return feasible_1d(cons, box, tol, witness);
    case 2: return feasible_2d(cons, box, tol, witness);
    case 3: return feasible_3d(cons, box, tol, witness);
    default: throw Error(ErrorKind::config, "linear_feasible: dim must be 1, 2 or 3");
  }
}

}  // namespace detail

namespace {

// Contrast rows over the full coefficient vector for one predictor and part.
Matrix band_contrast(const FittedModel& model, int predictor, BandPart part,
                     const EvalGrid& grid) {
  const ColumnLayout& lay = model.layout;
  const int d = model.n_coefs();
  const int g = static_cast<int>(grid.size());
  const int p = lay.fixed_cols();
  Matrix contrast = Matrix::Zero(g, d);
  const int f0 = lay.fixed_offset(predictor);
  const int t0 = p + lay.temporal_offset(predictor);
  const int s0 = p + lay.spatial_offset(predictor);
  const int i0 = p + lay.interaction_offset(predictor);
  const auto& opts = model.design_options;
  auto ksp = [&](const Point& s, const Point& knot) {
    return opts.spatial_kernel == SpatialKernelKind::thin_plate
               ? spatial_kernel(s, knot)
               : spatial_kernel_matern32(s, knot, opts.matern_range);
  };

  for (int gi = 0; gi < g; ++gi) {
    if (part == BandPart::temporal || part == BandPart::full) {
      const double t = grid.times[static_cast<std::size_t>(gi)];
      contrast(gi, f0 + 0) = 1.0;
      contrast(gi, f0 + 1) = t;
      for (int m = 0; m < lay.M; ++m)
        contrast(gi, t0 + m) = temporal_kernel(t, model.knots.temporal[static_cast<std::size_t>(m)]);
    }
    if (part == BandPart::spatial || part == BandPart::full) {
      const Point& s = grid.points[static_cast<std::size_t>(gi)];
      contrast(gi, f0 + 2) = s.x;
      contrast(gi, f0 + 3) = s.y;
      for (int n = 0; n < lay.N; ++n)
        contrast(gi, s0 + n) = ksp(s, model.knots.spatial[static_cast<std::size_t>(n)]);
    }
    if (part == BandPart::full && lay.interaction) {
      const double t = grid.times[static_cast<std::size_t>(gi)];
      const Point& s = grid.points[static_cast<std::size_t>(gi)];
      for (int m = 0; m < lay.M; ++m) {
        const double kt = temporal_kernel(t, model.knots.temporal[static_cast<std::size_t>(m)]);
        for (int n = 0; n < lay.N; ++n)
          contrast(gi, i0 + m * lay.N + n) =
              kt * ksp(s, model.knots.spatial[static_cast<std::size_t>(n)]);
      }
    }
  }
  return contrast;
}

void check_part_grid(BandPart part, const EvalGrid& grid) {
  grid.validate();
  if (part == BandPart::temporal && grid.mode != EvalGrid::Mode::temporal)
    throw Error(ErrorKind::config, "temporal band needs a temporal grid");
  if (part == BandPart::spatial && grid.mode != EvalGrid::Mode::spatial)
    throw Error(ErrorKind::config, "spatial band needs a spatial grid");
  if (part == BandPart::full && grid.mode != EvalGrid::Mode::full)
    throw Error(ErrorKind::config, "full band needs a paired (t, s) grid");
}

}  // namespace

ConfidenceBand simultaneous_band(const FittedModel& model, int predictor, BandPart part,
                                 const EvalGrid& grid, double gamma, int n_draws,
                                 std::uint64_t seed, int threads) {
  if (predictor < 0 || predictor >= model.layout.R)
    throw Error(ErrorKind::config, "simultaneous_band: predictor index out of range");
  check_part_grid(part, grid);

  Matrix contrast = band_contrast(model, predictor, part, grid);
  Vector coef(model.n_coefs());
  coef.head(model.layout.fixed_cols()) = model.theta;
  coef.tail(model.layout.random_cols()) = model.u;
  Vector center = contrast * coef;

  const auto blocks = detail::blocks_for_layout(model.layout);
  const auto sigma2 = detail::sigma2_vector(model.vc, model.layout);
  return detail::simulate_band(model.ata, model.layout.fixed_cols(), blocks, sigma2,
                               model.vc.sigma_eps2, contrast, center, grid, gamma, n_draws,
                               seed, threads);
}

namespace {

// 1-D abscissas for shape classification: times, or arc-length positions of
// a collinear spatial slice.
std::vector<double> band_abscissa(const ConfidenceBand& band) {
  if (band.grid.mode == EvalGrid::Mode::temporal) return band.grid.times;
  if (band.grid.mode == EvalGrid::Mode::spatial) {
    const auto& pts = band.grid.points;
    if (pts.size() < 2)
      return std::vector<double>(pts.size(), 0.0);
    // Check collinearity against the dominant direction.
    const Point& a = pts.front();
    double dx = 0, dy = 0, best = -1;
    for (const auto& p : pts) {
      const double ddx = p.x - a.x, ddy = p.y - a.y;
      const double d2 = ddx * ddx + ddy * ddy;
      if (d2 > best) {
        best = d2;
        dx = ddx;
        dy = ddy;
      }
    }
    const double len = std::sqrt(best);
    if (len == 0.0)
      throw Error(ErrorKind::config, "classify_shape: degenerate spatial slice");
    dx /= len;
    dy /= len;
    double span = 0.0;
    std::vector<double> abscissa(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double along = (pts[i].x - a.x) * dx + (pts[i].y - a.y) * dy;
      const double off = -(pts[i].x - a.x) * dy + (pts[i].y - a.y) * dx;
      span = std::max(span, std::abs(off));
      abscissa[i] = along;
    }
    if (span > 1e-9 * std::max(1.0, len))
      throw Error(ErrorKind::config,
                  "classify_shape: spatial grid is not one-dimensional; slice it first "
                  "or use classify_shape_planar");
    return abscissa;
  }
  throw Error(ErrorKind::config, "classify_shape: full (t, s) bands have no 1-D axis");
}

double band_tol(const ConfidenceBand& band) {
  double scale = 0.0;
  for (Eigen::Index i = 0; i < band.lower.size(); ++i)
    scale = std::max({scale, std::abs(band.lower(i)), std::abs(band.upper(i))});
  return 1e-9 * (1.0 + scale);
}

double band_box(const ConfidenceBand& band, const std::vector<double>& abscissa) {
  double lo = band.lower.minCoeff(), up = band.upper.maxCoeff();
  double amax = 1.0;
  for (double a : abscissa) amax = std::max(amax, std::abs(a));
  double span = 0.0;
  if (!abscissa.empty())
    span = *std::max_element(abscissa.begin(), abscissa.end()) -
           *std::min_element(abscissa.begin(), abscissa.end());
  const double range = std::max(up - lo, 1.0);
  const double bmax = span > 0 ? 4.0 * range / span : 1.0;
  return 10.0 * std::max({std::abs(lo), std::abs(up), 1.0, bmax * amax});
}

}  // namespace

ShapeVerdict classify_shape(const ConfidenceBand& band) {
  const auto abscissa = band_abscissa(band);
  const double tol = band_tol(band);

  ShapeVerdict verdict;
  verdict.level = band.level;

  // Constant: some a with max lower <= a <= min upper.
  const double max_lo = band.lower.maxCoeff();
  const double min_up = band.upper.minCoeff();
  if (max_lo <= min_up + tol) {
    verdict.shape = Shape::constant;
    verdict.witness = {0.5 * (max_lo + min_up)};
    return verdict;
  }

  // Linear: a + b g within the band at every grid point.
  std::vector<detail::LinCon> cons;
  for (std::size_t i = 0; i < abscissa.size(); ++i) {
    const double g = abscissa[i];
    cons.push_back({{1.0, g}, band.upper(static_cast<Eigen::Index>(i))});
    cons.push_back({{-1.0, -g}, -band.lower(static_cast<Eigen::Index>(i))});
  }
  std::vector<double> witness;
  if (detail::linear_feasible(cons, 2, band_box(band, abscissa), tol, &witness)) {
    verdict.shape = Shape::linear;
    verdict.witness = witness;
    return verdict;
  }
  verdict.shape = Shape::nonlinear;
  return verdict;
}

ShapeVerdict classify_shape_planar(const ConfidenceBand& band) {
  if (band.grid.mode != EvalGrid::Mode::spatial)
    throw Error(ErrorKind::config, "classify_shape_planar needs a spatial grid");
  const double tol = band_tol(band);

  ShapeVerdict verdict;
  verdict.level = band.level;

  const double max_lo = band.lower.maxCoeff();
  const double min_up = band.upper.minCoeff();
  if (max_lo <= min_up + tol) {
    verdict.shape = Shape::constant;
    verdict.witness = {0.5 * (max_lo + min_up)};
    return verdict;
  }

  std::vector<detail::LinCon> cons;
  double amax = 1.0;
  for (std::size_t i = 0; i < band.grid.points.size(); ++i) {
    const Point& s = band.grid.points[i];
    amax = std::max({amax, std::abs(s.x), std::abs(s.y)});
    cons.push_back({{1.0, s.x, s.y}, band.upper(static_cast<Eigen::Index>(i))});
    cons.push_back({{-1.0, -s.x, -s.y}, -band.lower(static_cast<Eigen::Index>(i))});
  }
  const double range = std::max(band.upper.maxCoeff() - band.lower.minCoeff(), 1.0);
  const double box = 10.0 * std::max(std::abs(band.upper.maxCoeff()),
                                     std::abs(band.lower.minCoeff())) +
                     10.0 * range * amax + 10.0;
  std::vector<double> witness;
  if (detail::linear_feasible(cons, 3, box, tol, &witness)) {
    verdict.shape = Shape::linear;
    verdict.witness = witness;
    return verdict;
  }
  verdict.shape = Shape::nonlinear;
  return verdict;
}

std::vector<Significance> significance_map(const ConfidenceBand& band) {
  std::vector<Significance> out(static_cast<std::size_t>(band.lower.size()),
                                Significance::not_significant);
  for (Eigen::Index i = 0; i < band.lower.size(); ++i) {
    if (band.lower(i) > 0.0)
      out[static_cast<std::size_t>(i)] = Significance::positive;
    else if (band.upper(i) < 0.0)
      out[static_cast<std::size_t>(i)] = Significance::negative;
  }
  return out;
}

InteractionTest test_interaction(const SpaceTimePanel& panel, const KnotLayout& knots,
                                 int predictor, int n_boot, std::uint64_t seed,
                                 const InteractionTestOptions& opts) {
  if (n_boot < 500)
    throw Error(ErrorKind::config, "test_interaction: n_boot must be >= 500");
  DesignOptions dopts = opts.design;
  dopts.interaction = true;
  DesignMatrices design = assemble_design(panel, knots, dopts);
  if (predictor < 0 || predictor >= design.layout.R)
    throw Error(ErrorKind::config, "test_interaction: predictor index out of range");

  // The statistic must be the same deterministic function of the response
  // for the observed data and every bootstrap draw: single deterministic
  // start, shared design cross-products.
  RemlOptions ropts = opts.reml;
  ropts.n_starts = 1;
  ropts.warm_start.reset();
  const int kinds = 3;
  const int interaction_comp = predictor * kinds + 2;
  RemlOptions null_opts = ropts;
  null_opts.pinned_components.push_back(interaction_comp);

  const auto blocks = detail::blocks_for_layout(design.layout);
  const int n_comp = detail::n_components_for(design.layout);
  detail::CrossProblem prob =
      detail::make_cross_problem(design.fixed, design.random, blocks, n_comp, design.response);

  auto rlrt_of = [&](detail::CrossProblem& pr) -> std::array<double, 3> {
    detail::CoreResult full = detail::reml_optimize(pr, ropts);
    detail::CoreResult null = detail::reml_optimize(pr, null_opts);
    if (!null.convergence.converged)
      throw Error(ErrorKind::non_convergence, "test_interaction: null fit did not converge");
    if (!full.convergence.converged)
      throw Error(ErrorKind::non_convergence, "test_interaction: full fit did not converge");
    const double stat = std::max(0.0, 2.0 * (full.loglik_reml - null.loglik_reml));
    return {stat, full.loglik_reml, null.loglik_reml};
  };

  const auto obs = rlrt_of(prob);

  // Null fit used to generate parametric bootstrap responses; the mean is
  // the fixed part only, random effects are drawn fresh per replicate.
  detail::CoreResult null_fit = detail::reml_optimize(prob, null_opts);
  const Vector mean = design.fixed * null_fit.coef.head(design.fixed.cols());

  Rng root = Rng::from_seed(seed).child("rlrt-boot");
  const double sig_eps = std::sqrt(null_fit.sigma_eps2);
  std::vector<double> boot(static_cast<std::size_t>(n_boot));
  std::vector<int> failures(static_cast<std::size_t>(n_boot), 0);

  parallel_for(static_cast<std::size_t>(n_boot), opts.threads, [&](std::size_t b) {
    Rng rng = root.child(static_cast<std::uint64_t>(b));
    Vector y = mean;
    // Random-effect contributions under the null variance components.
    for (const auto& blk : blocks) {
      const double s2 = null_fit.sigma2[static_cast<std::size_t>(blk.component)];
      if (!(s2 > 0.0)) continue;
      const double sd = std::sqrt(s2);
      for (int c = blk.col_begin; c < blk.col_end; ++c)
        y += design.random.col(c) * (sd * rng.normal());
    }
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += sig_eps * rng.normal();

    detail::CrossProblem local = prob;  // shares nothing mutable; copies aty etc.
    detail::set_response(local, design.fixed, design.random, y);
    try {
      boot[b] = rlrt_of(local)[0];
    } catch (const Error&) {
      failures[b] = 1;
      boot[b] = std::numeric_limits<double>::quiet_NaN();
    }
  });

  int used = 0, exceed = 0;
  for (int b = 0; b < n_boot; ++b) {
    if (failures[static_cast<std::size_t>(b)]) continue;
    ++used;
    if (boot[static_cast<std::size_t>(b)] >= obs[0] - 1e-12) ++exceed;
  }
  if (used < n_boot / 2)
    throw Error(ErrorKind::non_convergence, "test_interaction: too many bootstrap fits failed");

  InteractionTest out;
  out.predictor = predictor;
  out.rlrt_stat = obs[0];
  out.loglik_full = obs[1];
  out.loglik_null = obs[2];
  out.null_draws = used;
  out.seed = seed;
  out.p_value = (1.0 + exceed) / (used + 1.0);
  return out;
}

}  // namespace stvcm
