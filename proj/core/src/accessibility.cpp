#include "stvcm/accessibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>

#include "stvcm/parallel.hpp"

namespace stvcm {

namespace {

std::string fmt_point(const Point& p) {
  std::ostringstream os;
  os << "(" << p.x << ", " << p.y << ")";
  return os.str();
}

}  // namespace

std::size_t ServiceNetwork::year_index(double year) const {
  for (std::size_t i = 0; i < years.size(); ++i)
    if (years[i] == year) return i;
  throw Error(ErrorKind::validation, "year " + std::to_string(year) + " not present in network");
}

void ServiceNetwork::validate() const {
  if (years.size() != sites_by_year.size())
    throw Error(ErrorKind::validation, "sites_by_year must have one entry per year");
  if (!source) throw Error(ErrorKind::validation, "network has no distance source");
}

void EuclideanDistance::distances(std::size_t, const Point& p, std::size_t yi,
                                  std::vector<double>& out) const {
  const auto& sites = sites_.at(yi);
  out.resize(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) out[i] = distance(p, sites[i]);
}

void MatrixDistance::distances(std::size_t point_id, const Point&, std::size_t yi,
                               std::vector<double>& out) const {
  const Matrix& m = per_year_.at(yi);
  if (point_id >= static_cast<std::size_t>(m.rows()))
    throw Error(ErrorKind::validation,
                "point id " + std::to_string(point_id) + " not present in distance matrix");
  out.resize(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double d = m(static_cast<Eigen::Index>(point_id), j);
    if (!(std::isfinite(d) && d >= 0.0))
      throw Error(ErrorKind::validation, "non-finite or negative distance matrix entry");
    out[static_cast<std::size_t>(j)] = d;
  }
}

GraphDistance::GraphDistance(std::size_t n_vertices,
                             std::vector<std::tuple<int, int, double>> edges,
                             std::vector<int> point_vertex,
                             std::vector<std::vector<int>> site_vertex)
    : adj_(n_vertices), point_vertex_(std::move(point_vertex)),
      site_vertex_(std::move(site_vertex)) {
  for (const auto& [u, v, w] : edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n_vertices ||
        static_cast<std::size_t>(v) >= n_vertices)
      throw Error(ErrorKind::validation, "graph edge endpoint out of range");
    if (!(std::isfinite(w) && w >= 0.0))
      throw Error(ErrorKind::validation, "graph edge weight must be finite and >= 0");
    adj_[static_cast<std::size_t>(u)].emplace_back(v, w);
    adj_[static_cast<std::size_t>(v)].emplace_back(u, w);
  }
}

std::vector<double> GraphDistance::shortest_paths(int start) const {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(adj_.size(), inf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[static_cast<std::size_t>(start)] = 0.0;
  heap.emplace(0.0, start);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (const auto& [v, w] : adj_[static_cast<std::size_t>(u)]) {
      const double nd = d + w;
      if (nd < dist[static_cast<std::size_t>(v)]) {
        dist[static_cast<std::size_t>(v)] = nd;
        heap.emplace(nd, v);
      }
    }
  }
  return dist;
}

void GraphDistance::distances(std::size_t point_id, const Point& p, std::size_t yi,
                              std::vector<double>& out) const {
  if (point_id >= point_vertex_.size())
    throw Error(ErrorKind::validation,
                "point id " + std::to_string(point_id) + " has no graph vertex");
  const auto dist = shortest_paths(point_vertex_[point_id]);
  const auto& sites = site_vertex_.at(yi);
  out.resize(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const double d = dist.at(static_cast<std::size_t>(sites[i]));
    if (!std::isfinite(d))
      throw Error(ErrorKind::validation,
                  "point " + fmt_point(p) + " cannot reach site vertex " +
                      std::to_string(sites[i]));
    out[i] = d;
  }
}

double travel_cost(const ServiceNetwork& network, std::size_t point_id, const Point& p,
                   double year, int q) {
  if (q < 1) throw Error(ErrorKind::config, "q must be >= 1");
  const std::size_t yi = network.year_index(year);
  std::vector<double> d;
  network.source->distances(point_id, p, yi, d);
  if (d.size() < static_cast<std::size_t>(q))
    throw Error(ErrorKind::validation,
                "year " + std::to_string(network.years[yi]) + " has " +
                    std::to_string(d.size()) + " sites, fewer than q=" + std::to_string(q));
  std::nth_element(d.begin(), d.begin() + (q - 1), d.end());
  // Sum the q smallest in ascending order so the result does not depend on
  // the partial ordering nth_element leaves behind.
  std::sort(d.begin(), d.begin() + q);
  double sum = 0.0;
  for (int i = 0; i < q; ++i) sum += d[static_cast<std::size_t>(i)];
  return sum / q;
}

std::vector<double> smooth_rate(std::span<const Point> points, std::span<const double> weights,
                                std::span<const Point> grid, double bandwidth) {
  if (points.empty()) throw Error(ErrorKind::validation, "smooth_rate: empty point set");
  if (!(bandwidth > 0.0)) throw Error(ErrorKind::config, "smooth_rate: bandwidth must be > 0");
  if (!weights.empty() && weights.size() != points.size())
    throw Error(ErrorKind::config, "smooth_rate: weights size mismatch");
  const double h2 = bandwidth * bandwidth;
  const double norm = 1.0 / (2.0 * std::numbers::pi * h2);
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double dx = grid[g].x - points[i].x;
      const double dy = grid[g].y - points[i].y;
      const double w = weights.empty() ? 1.0 : weights[i];
      acc += w * std::exp(-0.5 * (dx * dx + dy * dy) / h2);
    }
    out[g] = acc * norm;
  }
  return out;
}

double silverman_bandwidth(std::span<const Point> points) {
  if (points.empty()) throw Error(ErrorKind::validation, "silverman_bandwidth: empty point set");
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (const auto& p : points) {
    vx += (p.x - mx) * (p.x - mx);
    vy += (p.y - my) * (p.y - my);
  }
  const double denom = points.size() > 1 ? n - 1.0 : 1.0;
  double sigma = std::sqrt(0.5 * (vx + vy) / denom);
  if (sigma <= 0.0) sigma = 1.0;
  return sigma * std::pow(n, -1.0 / 6.0);
}

namespace {

// Weighted simple linear regression of z on w; returns (intercept, slope).
std::pair<double, double> weighted_line(const std::vector<double>& x, const std::vector<double>& z,
                                        const std::vector<double>& w) {
  double sw = 0, swx = 0, swz = 0, swxx = 0, swxz = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    swx += w[i] * x[i];
    swz += w[i] * z[i];
    swxx += w[i] * x[i] * x[i];
    swxz += w[i] * x[i] * z[i];
  }
  const double det = sw * swxx - swx * swx;
  if (!(std::abs(det) > 1e-12 * std::max(1.0, sw * swxx)))
    throw Error(ErrorKind::rank_deficient,
                "estimate_beta: degenerate design (costs are constant)");
  const double slope = (sw * swxz - swx * swz) / det;
  const double intercept = (swz - slope * swx) / sw;
  return {intercept, slope};
}

void check_beta_inputs(std::span<const double> costs, std::span<const double> weights) {
  if (costs.size() != weights.size() || costs.size() < 2)
    throw Error(ErrorKind::config, "estimate_beta: need >= 2 matching cost/weight pairs");
  for (double c : costs)
    if (!(c > 0.0)) throw Error(ErrorKind::validation, "estimate_beta: costs must be > 0");
  for (double w : weights)
    if (!(w > 0.0)) throw Error(ErrorKind::validation, "estimate_beta: weights must be > 0");
}

}  // namespace

double estimate_beta_ols(std::span<const double> costs, std::span<const double> weights,
                         double weight_floor) {
  check_beta_inputs(costs, weights);
  const std::size_t n = costs.size();
  std::vector<double> x(n), z(n), w(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::log(costs[i]);
    z[i] = std::log(std::max(weights[i], weight_floor));
  }
  return -weighted_line(x, z, w).second;
}

double estimate_beta(std::span<const double> costs, std::span<const double> weights,
                     const HuberOptions& opts) {
  check_beta_inputs(costs, weights);
  const std::size_t n = costs.size();
  std::vector<double> x(n), z(n), w(n, 1.0), r(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::log(costs[i]);
    z[i] = std::log(std::max(weights[i], opts.weight_floor));
  }
  auto [a, b] = weighted_line(x, z, w);  // OLS start
  for (int it = 0; it < opts.max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) r[i] = z[i] - a - b * x[i];
    // MAD scale, consistent for the normal.
    std::vector<double> absr(n);
    for (std::size_t i = 0; i < n; ++i) absr[i] = std::abs(r[i]);
    std::nth_element(absr.begin(), absr.begin() + n / 2, absr.end());
    double scale = absr[n / 2] / 0.6744897501960817;
    if (scale < 1e-14) break;  // essentially exact fit
    const double c = opts.tuning * scale;
    for (std::size_t i = 0; i < n; ++i)
      w[i] = std::abs(r[i]) <= c ? 1.0 : c / std::abs(r[i]);
    auto [a2, b2] = weighted_line(x, z, w);
    const double step = std::abs(a2 - a) + std::abs(b2 - b);
    a = a2;
    b = b2;
    if (step <= opts.rel_tol * (1.0 + std::abs(a) + std::abs(b))) break;
  }
  return -b;
}

AccessibilityPanel accessibility_panel(const ServiceNetwork& network,
                                       const std::vector<Community>& communities,
                                       const RateField& rates, int q, double beta,
                                       int threads) {
  network.validate();
  if (communities.empty()) throw Error(ErrorKind::validation, "no communities given");
  if (!rates.population || !rates.service)
    throw Error(ErrorKind::validation, "rate field must provide population and service rates");
  for (const auto& c : communities)
    if (c.sample_points.empty())
      throw Error(ErrorKind::validation, "community " + c.id + " has no sample points");

  // Global sample-point ids: community order, then point order.
  std::vector<std::size_t> first_id(communities.size());
  std::size_t next = 0;
  for (std::size_t s = 0; s < communities.size(); ++s) {
    first_id[s] = next;
    next += communities[s].sample_points.size();
  }

  AccessibilityPanel out;
  out.years = network.years;
  out.q_nearest = q;
  out.beta = beta;
  out.community_ids.reserve(communities.size());
  for (const auto& c : communities) out.community_ids.push_back(c.id);
  out.values.resize(static_cast<Eigen::Index>(communities.size()),
                    static_cast<Eigen::Index>(network.years.size()));

  parallel_for(communities.size(), threads, [&](std::size_t s) {
    const auto& comm = communities[s];
    const double B = static_cast<double>(comm.sample_points.size());
    for (std::size_t yi = 0; yi < network.years.size(); ++yi) {
      double acc = 0.0;
      for (std::size_t b = 0; b < comm.sample_points.size(); ++b) {
        const Point& u = comm.sample_points[b];
        const double cost =
            travel_cost(network, first_id[s] + b, u, network.years[yi], q);
        const double pop = rates.population(u, yi);
        const double svc = rates.service(u, yi);
        if (!(svc > 0.0))
          throw Error(ErrorKind::validation,
                      "service rate is zero at point " + fmt_point(u) + " (community " +
                          comm.id + ", year " + std::to_string(network.years[yi]) + ")");
        if (pop < 0.0)
          throw Error(ErrorKind::validation,
                      "negative population rate at point " + fmt_point(u));
        acc += std::pow(cost, beta) * (pop / svc);
      }
      out.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(yi)) = acc / B;
    }
  });
  return out;
}

}  // namespace stvcm
