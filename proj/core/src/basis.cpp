#include "stvcm/basis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "stvcm/rng.hpp"

namespace stvcm {

double temporal_kernel(double t, double knot) {
  const double r = std::abs(t - knot);
  return r * r * r;
}

double spatial_kernel(const Point& s, const Point& knot) {
  const double r = distance(s, knot);
  if (r == 0.0) return 0.0;
  return r * r * std::log(r);
}

double spatial_kernel_matern32(const Point& s, const Point& knot, double rho) {
  const double a = std::sqrt(3.0) * distance(s, knot) / rho;
  return (1.0 + a) * std::exp(-a);
}

std::vector<double> select_temporal_knots(std::vector<double> times, int m) {
  if (m < 1) throw Error(ErrorKind::config, "select_temporal_knots: m must be >= 1");
  std::sort(times.begin(), times.end());
  std::vector<double> u(times);
  u.erase(std::unique(u.begin(), u.end()), u.end());
  if (u.size() < static_cast<std::size_t>(m))
    throw Error(ErrorKind::validation,
                "select_temporal_knots: need at least m distinct time values");
  const double n = static_cast<double>(times.size());
  std::vector<double> knots(static_cast<std::size_t>(m));
  for (int k = 1; k <= m; ++k) {
    const double p = static_cast<double>(k) / (m + 1);
    // Linear-interpolation sample quantile on the sorted values.
    const double h = (n - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min<std::size_t>(lo + 1, times.size() - 1);
    const double frac = h - std::floor(h);
    knots[static_cast<std::size_t>(k - 1)] = times[lo] + frac * (times[hi] - times[lo]);
  }
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i] > knots[i - 1]))
      throw Error(ErrorKind::validation,
                  "select_temporal_knots: ties collapse quantile knots; reduce m");
  return knots;
}

double coverage_radius(const std::vector<Point>& locations, const std::vector<Point>& knots) {
  double worst = 0.0;
  for (const auto& p : locations) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& k : knots) best = std::min(best, distance(p, k));
    worst = std::max(worst, best);
  }
  return worst;
}

std::vector<Point> select_spatial_knots(const std::vector<Point>& locations, int n,
                                        std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::config, "select_spatial_knots: n must be >= 1");
  // Distinct candidates, first occurrence kept.
  std::vector<Point> cand;
  for (const auto& p : locations) {
    bool dup = false;
    for (const auto& q : cand)
      if (q == p) {
        dup = true;
        break;
      }
    if (!dup) cand.push_back(p);
  }
  if (cand.size() < static_cast<std::size_t>(n))
    throw Error(ErrorKind::validation,
                "select_spatial_knots: n exceeds the number of distinct locations");
  const std::size_t C = cand.size();
  const std::size_t K = static_cast<std::size_t>(n);

  Rng rng = Rng::from_seed(seed).child("spatial-knots");

  // k-means++ style seeding on squared distances.
  std::vector<std::size_t> chosen;
  std::vector<double> d2(C, std::numeric_limits<double>::infinity());
  chosen.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(C) - 1)));
  while (chosen.size() < K) {
    double total = 0.0;
    for (std::size_t i = 0; i < C; ++i) {
      const double d = distance(cand[i], cand[chosen.back()]);
      d2[i] = std::min(d2[i], d * d);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform01() * total;
      double run = 0.0;
      for (std::size_t i = 0; i < C; ++i) {
        run += d2[i];
        if (run >= target) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
  }

  // A few Lloyd rounds, snapping centers back to candidate points.
  std::vector<Point> centers(K);
  for (std::size_t k = 0; k < K; ++k) centers[k] = cand[chosen[k]];
  std::vector<std::size_t> assign(C, 0);
  for (int round = 0; round < 20; ++round) {
    bool moved = false;
    for (std::size_t i = 0; i < C; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const double d = distance(cand[i], centers[k]);
        if (d < best) {
          best = d;
          arg = k;
        }
      }
      if (assign[i] != arg) {
        assign[i] = arg;
        moved = true;
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      double sx = 0, sy = 0;
      std::size_t cnt = 0;
      for (std::size_t i = 0; i < C; ++i)
        if (assign[i] == k) {
          sx += cand[i].x;
          sy += cand[i].y;
          ++cnt;
        }
      if (cnt == 0) continue;
      const Point mean{sx / static_cast<double>(cnt), sy / static_cast<double>(cnt)};
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t i = 0; i < C; ++i) {
        const double d = distance(cand[i], mean);
        if (d < best) {
          best = d;
          arg = i;
        }
      }
      centers[k] = cand[arg];
    }
    if (!moved) break;
  }

  // De-duplicate snapped centers before refinement.
  std::vector<Point> knots;
  for (const auto& c : centers) {
    bool dup = false;
    for (const auto& k : knots)
      if (k == c) {
        dup = true;
        break;
      }
    if (!dup) knots.push_back(c);
  }
  for (std::size_t i = 0; knots.size() < K && i < C; ++i) {
    bool dup = false;
    for (const auto& k : knots)
      if (k == cand[i]) {
        dup = true;
        break;
      }
    if (!dup) knots.push_back(cand[i]);
  }

  // Greedy point-swap minimax refinement: nearest/second-nearest bookkeeping
  // makes each candidate swap an O(C) evaluation.
  auto radius_after_swap = [&](std::size_t slot, const Point& repl) {
    double worst = 0.0;
    for (std::size_t i = 0; i < C; ++i) {
      double best = distance(cand[i], repl);
      for (std::size_t k = 0; k < knots.size(); ++k) {
        if (k == slot) continue;
        best = std::min(best, distance(cand[i], knots[k]));
      }
      worst = std::max(worst, best);
      }
    return worst;
  };
  double current = coverage_radius(cand, knots);
  for (int sweep = 0; sweep < 8; ++sweep) {
    bool improved = false;
    for (std::size_t ci = 0; ci < C; ++ci) {
      bool is_knot = false;
      for (const auto& k : knots)
        if (k == cand[ci]) {
          is_knot = true;
          break;
        }
      if (is_knot) continue;
      for (std::size_t slot = 0; slot < knots.size(); ++slot) {
        const double r = radius_after_swap(slot, cand[ci]);
        if (r < current * (1.0 - 1e-12)) {
          knots[slot] = cand[ci];
          current = r;
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  return knots;
}

KnotLayout::SeparationReport KnotLayout::check_separation() const {
  SeparationReport rep;
  rep.min_temporal_gap = std::numeric_limits<double>::infinity();
  rep.min_spatial_gap = std::numeric_limits<double>::infinity();
  if (!has_providers()) return rep;

  std::vector<const std::vector<double>*> tf;
  tf.push_back(&temporal);
  for (const auto& f : provider_temporal) tf.push_back(&f);
  std::vector<const std::vector<Point>*> sf;
  sf.push_back(&spatial);
  for (const auto& f : provider_spatial) sf.push_back(&f);

  auto fam_name = [](std::size_t f) {
    return f == 0 ? std::string("global") : "provider " + std::to_string(f);
  };

  for (std::size_t a = 0; a < tf.size(); ++a)
    for (std::size_t b = a + 1; b < tf.size(); ++b)
      for (std::size_t i = 0; i < tf[a]->size(); ++i)
        for (std::size_t j = 0; j < tf[b]->size(); ++j) {
          const double gap = std::abs((*tf[a])[i] - (*tf[b])[j]);
          rep.min_temporal_gap = std::min(rep.min_temporal_gap, gap);
          if (!(gap > min_temporal_sep)) {
            std::ostringstream os;
            os << "temporal knots " << fam_name(a) << "[" << i << "]=" << (*tf[a])[i] << " and "
               << fam_name(b) << "[" << j << "]=" << (*tf[b])[j] << " gap " << gap
               << " <= d_T=" << min_temporal_sep;
            rep.violations.push_back(os.str());
          }
        }
  for (std::size_t a = 0; a < sf.size(); ++a)
    for (std::size_t b = a + 1; b < sf.size(); ++b)
      for (std::size_t i = 0; i < sf[a]->size(); ++i)
        for (std::size_t j = 0; j < sf[b]->size(); ++j) {
          const double gap = distance((*sf[a])[i], (*sf[b])[j]);
          rep.min_spatial_gap = std::min(rep.min_spatial_gap, gap);
          if (!(gap > min_spatial_sep)) {
            std::ostringstream os;
            os << "spatial knots " << fam_name(a) << "[" << i << "] and " << fam_name(b) << "["
               << j << "] gap " << gap << " <= d_S=" << min_spatial_sep;
            rep.violations.push_back(os.str());
          }
        }
  rep.identifiable = rep.violations.empty();
  return rep;
}

void KnotLayout::validate() const {
  if (temporal.empty()) throw Error(ErrorKind::validation, "knot layout has no temporal knots");
  if (spatial.empty()) throw Error(ErrorKind::validation, "knot layout has no spatial knots");
  for (std::size_t i = 1; i < temporal.size(); ++i)
    if (!(temporal[i] > temporal[i - 1]))
      throw Error(ErrorKind::validation, "temporal knots must be strictly increasing");
  for (std::size_t i = 0; i < spatial.size(); ++i)
    for (std::size_t j = i + 1; j < spatial.size(); ++j)
      if (spatial[i] == spatial[j])
        throw Error(ErrorKind::validation, "spatial knots must be pairwise distinct");
  if (provider_temporal.size() != provider_spatial.size())
    throw Error(ErrorKind::validation, "provider knot families must pair temporal and spatial");
  if (has_providers()) {
    for (const auto& f : provider_temporal)
      if (f.size() != temporal.size())
        throw Error(ErrorKind::validation, "provider temporal families must match M");
    for (const auto& f : provider_spatial)
      if (f.size() != spatial.size())
        throw Error(ErrorKind::validation, "provider spatial families must match N");
    const auto rep = check_separation();
    if (!rep.identifiable) {
      std::string msg = "knot separation violated:";
      const std::size_t show = std::min<std::size_t>(rep.violations.size(), 8);
      for (std::size_t i = 0; i < show; ++i) msg += "\n  " + rep.violations[i];
      if (rep.violations.size() > show)
        msg += "\n  ... (" + std::to_string(rep.violations.size() - show) + " more)";
      throw Error(ErrorKind::identifiability, msg);
    }
  }
}

std::string ColumnLayout::predictor_label(int r) const {
  if (r >= 0 && static_cast<std::size_t>(r) < predictor_names.size() &&
      !predictor_names[static_cast<std::size_t>(r)].empty())
    return predictor_names[static_cast<std::size_t>(r)];
  return "x" + std::to_string(r + 1);
}

std::string ColumnLayout::fixed_col_name(int col) const {
  static const char* part[4] = {"const", "t", "s1", "s2"};
  return predictor_label(col / 4) + ":" + part[col % 4];
}

void SpaceTimePanel::validate() const {
  if (locations.empty() || times.empty())
    throw Error(ErrorKind::validation, "panel has no locations or no times");
  if (location_ids.size() != locations.size())
    throw Error(ErrorKind::validation, "panel location ids do not match locations");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw Error(ErrorKind::validation, "panel times must be strictly increasing");
  if (response.rows() != n_locations() || response.cols() != n_times())
    throw Error(ErrorKind::validation, "panel response has wrong dimensions");
  if (covariates.empty()) throw Error(ErrorKind::validation, "panel has no covariates");
  for (const auto& x : covariates)
    if (x.rows() != n_locations() || x.cols() != n_times())
      throw Error(ErrorKind::validation,
                  "covariate grid does not match the panel dimensions");
  if (!predictor_names.empty() && predictor_names.size() != covariates.size())
    throw Error(ErrorKind::validation, "predictor names do not match covariates");
}

DesignMatrices assemble_design(const SpaceTimePanel& panel, const KnotLayout& knots,
                               const DesignOptions& opts) {
  panel.validate();
  knots.validate();

  const int S = static_cast<int>(panel.n_locations());
  const int T = static_cast<int>(panel.n_times());
  const int R = static_cast<int>(panel.n_predictors());
  const int M = static_cast<int>(knots.temporal.size());
  const int N = static_cast<int>(knots.spatial.size());

  DesignMatrices d;
  d.layout.R = R;
  d.layout.M = M;
  d.layout.N = N;
  d.layout.interaction = opts.interaction;
  d.layout.predictor_names = panel.predictor_names;
  d.knots = knots;
  d.options = opts;
  d.times = panel.times;
  d.locations = panel.locations;

  // Kernel tables: T x M temporal, S x N spatial. The interaction block is a
  // row-wise product of these, so the only S*T*M*N work is writing it out.
  Matrix kt(T, M), ks(S, N);
  for (int i = 0; i < T; ++i)
    for (int m = 0; m < M; ++m)
      kt(i, m) = temporal_kernel(panel.times[static_cast<std::size_t>(i)],
                                 knots.temporal[static_cast<std::size_t>(m)]);
  for (int j = 0; j < S; ++j)
    for (int n = 0; n < N; ++n) {
      const Point& s = panel.locations[static_cast<std::size_t>(j)];
      const Point& k = knots.spatial[static_cast<std::size_t>(n)];
      ks(j, n) = opts.spatial_kernel == SpatialKernelKind::thin_plate
                     ? spatial_kernel(s, k)
                     : spatial_kernel_matern32(s, k, opts.matern_range);
    }

  d.missing_mask.assign(static_cast<std::size_t>(S) * static_cast<std::size_t>(T), 0);
  std::vector<std::pair<int, int>> rows;  // (j, i), location-major
  rows.reserve(static_cast<std::size_t>(S) * static_cast<std::size_t>(T));
  for (int j = 0; j < S; ++j)
    for (int i = 0; i < T; ++i) {
      if (std::isnan(panel.response(j, i))) {
        d.missing_mask[static_cast<std::size_t>(j) * static_cast<std::size_t>(T) +
                       static_cast<std::size_t>(i)] = 1;
        continue;
      }
      for (int r = 0; r < R; ++r)
        if (!std::isfinite(panel.covariates[static_cast<std::size_t>(r)](j, i)))
          throw Error(ErrorKind::validation, "non-finite covariate at an observed cell");
      rows.emplace_back(j, i);
    }
  const Eigen::Index n_rows = static_cast<Eigen::Index>(rows.size());
  if (n_rows == 0) throw Error(ErrorKind::validation, "all panel cells are missing");

  d.fixed.resize(n_rows, d.layout.fixed_cols());
  d.random.resize(n_rows, d.layout.random_cols());
  d.response.resize(n_rows);
  d.row_location.resize(rows.size());
  d.row_time.resize(rows.size());

  const int rp = d.layout.random_per_predictor();
  for (Eigen::Index row = 0; row < n_rows; ++row) {
    const auto [j, i] = rows[static_cast<std::size_t>(row)];
    d.row_location[static_cast<std::size_t>(row)] = j;
    d.row_time[static_cast<std::size_t>(row)] = i;
    d.response(row) = panel.response(j, i);
    const double t = panel.times[static_cast<std::size_t>(i)];
    const Point& s = panel.locations[static_cast<std::size_t>(j)];
    for (int r = 0; r < R; ++r) {
      const double x = panel.covariates[static_cast<std::size_t>(r)](j, i);
      const int f0 = d.layout.fixed_offset(r);
      d.fixed(row, f0 + 0) = x;
      d.fixed(row, f0 + 1) = x * t;
      d.fixed(row, f0 + 2) = x * s.x;
      d.fixed(row, f0 + 3) = x * s.y;
      const int z0 = r * rp;
      for (int m = 0; m < M; ++m) d.random(row, z0 + m) = x * kt(i, m);
      for (int n = 0; n < N; ++n) d.random(row, z0 + M + n) = x * ks(j, n);
      if (opts.interaction) {
        const int i0 = z0 + M + N;
        for (int m = 0; m < M; ++m) {
          const double tv = kt(i, m);
          for (int n = 0; n < N; ++n) d.random(row, i0 + m * N + n) = x * tv * ks(j, n);
        }
      }
    }
  }
  return d;
}

}  // namespace stvcm
