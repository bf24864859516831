// stvcm: batch front end for space-time varying coefficient analyses.
//
// Subcommands: access, fit, bands, shape, test-interaction, fit-multilevel,
// simulate. Every artifact embeds the resolved config hash and seed, and
// reruns with the same config and seed are byte-identical at any --threads.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stvcm/accessibility.hpp"
#include "stvcm/basis.hpp"
#include "stvcm/inference.hpp"
#include "stvcm/io.hpp"
#include "stvcm/mixed_model.hpp"
#include "stvcm/multilevel.hpp"
#include "stvcm/rng.hpp"
#include "stvcm/simulate.hpp"

namespace {

using namespace stvcm;

enum LogLevel { kLogOff = 0, kLogError = 1, kLogInfo = 2, kLogDebug = 3 };

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("STVCM_LOG");
    if (!env) return kLogError;
    const std::string v(env);
    if (v == "off") return kLogOff;
    if (v == "error") return kLogError;
    if (v == "info") return kLogInfo;
    if (v == "debug") return kLogDebug;
    return kLogError;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= kLogInfo) std::cerr << "[stvcm] " << msg << "\n";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::io: return 3;
    case ErrorKind::schema_version: return 4;
    case ErrorKind::rank_deficient: return 5;
    case ErrorKind::non_convergence: return 6;
    case ErrorKind::identifiability: return 7;
    case ErrorKind::validation: return 8;
  }
  return 1;
}

// FNV-1a over the sorted resolved options; stable across runs by design.
std::string config_hash(const std::string& subcommand,
                        const std::map<std::string, std::string>& opts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& s) {
    for (char c : s) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
  };
  feed(subcommand);
  feed("\n");
  for (const auto& [k, v] : opts) {
    feed(k);
    feed("=");
    feed(v);
    feed("\n");
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct CommonArgs {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
};

Meta base_meta(const std::string& subcommand, const CommonArgs& common,
               const std::map<std::string, std::string>& opts) {
  Meta meta;
  meta["subcommand"] = subcommand;
  meta["config_hash"] = config_hash(subcommand, opts);
  meta["seed"] = std::to_string(common.seed);
  meta["format_version"] = std::to_string(kFormatVersion);
  return meta;
}

// ---------------------------------------------------------------------------
// access

struct AccessArgs {
  std::string sites, communities;
  std::string rates;                     // precomputed rate table
  std::string pop_points, svc_points;    // point clouds for smoothing
  double bandwidth = 0.0;
  std::string distances;                 // precomputed distance matrix CSV
  std::string graph_vertices, graph_edges;
  int q = 3;
  std::string beta = "estimate";
  CommonArgs common;
};

int snap_vertex(const std::vector<Point>& vertices, const Point& p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    const double d = distance(vertices[v], p);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(v);
    }
  }
  return best;
}

int run_access(const AccessArgs& args) {
  auto [years, sites] = read_sites_csv(args.sites);
  const auto communities = read_communities_csv(args.communities);

  std::vector<Point> all_points;
  for (const auto& c : communities)
    for (const auto& p : c.sample_points) all_points.push_back(p);

  ServiceNetwork net;
  net.years = years;
  net.sites_by_year = sites;
  if (!args.distances.empty()) {
    // point_id,year,site_index,distance
    const auto table = read_csv(args.distances);
    const int c_pid = table.require_column("point_id");
    const int c_year = table.require_column("year");
    const int c_site = table.require_column("site_index");
    const int c_dist = table.require_column("distance");
    std::vector<Matrix> per_year;
    for (std::size_t yi = 0; yi < years.size(); ++yi)
      per_year.push_back(Matrix::Constant(static_cast<Eigen::Index>(all_points.size()),
                                          static_cast<Eigen::Index>(sites[yi].size()), -1.0));
    for (const auto& row : table.rows) {
      const auto pid = static_cast<Eigen::Index>(std::stod(row[static_cast<std::size_t>(c_pid)]));
      const double year = std::stod(row[static_cast<std::size_t>(c_year)]);
      const auto si = static_cast<Eigen::Index>(std::stod(row[static_cast<std::size_t>(c_site)]));
      const double d = std::stod(row[static_cast<std::size_t>(c_dist)]);
      std::size_t yi = net.year_index(year);
      per_year[yi](pid, si) = d;
    }
    for (const auto& m : per_year)
      if ((m.array() < 0).any())
        throw Error(ErrorKind::io, "distance matrix CSV is missing entries");
    net.source = std::make_shared<MatrixDistance>(std::move(per_year));
  } else if (!args.graph_vertices.empty() || !args.graph_edges.empty()) {
    if (args.graph_vertices.empty() || args.graph_edges.empty())
      throw Error(ErrorKind::config, "graph mode needs both --graph-vertices and --graph-edges");
    const auto vtable = read_csv(args.graph_vertices);
    const int c_x = vtable.require_column("x");
    const int c_y = vtable.require_column("y");
    std::vector<Point> vertices;
    for (const auto& row : vtable.rows)
      vertices.push_back({std::stod(row[static_cast<std::size_t>(c_x)]),
                          std::stod(row[static_cast<std::size_t>(c_y)])});
    const auto etable = read_csv(args.graph_edges);
    const int c_u = etable.require_column("u");
    const int c_v = etable.require_column("v");
    const int c_w = etable.require_column("weight");
    std::vector<std::tuple<int, int, double>> edges;
    for (const auto& row : etable.rows)
      edges.emplace_back(static_cast<int>(std::stod(row[static_cast<std::size_t>(c_u)])),
                         static_cast<int>(std::stod(row[static_cast<std::size_t>(c_v)])),
                         std::stod(row[static_cast<std::size_t>(c_w)]));
    std::vector<int> point_vertex;
    for (const auto& p : all_points) point_vertex.push_back(snap_vertex(vertices, p));
    std::vector<std::vector<int>> site_vertex;
    for (const auto& year_sites : sites) {
      std::vector<int> sv;
      for (const auto& s : year_sites) sv.push_back(snap_vertex(vertices, s));
      site_vertex.push_back(std::move(sv));
    }
    net.source = std::make_shared<GraphDistance>(vertices.size(), std::move(edges),
                                                 std::move(point_vertex), std::move(site_vertex));
  } else {
    net.source = std::make_shared<EuclideanDistance>(sites);
  }

  RateField rates;
  if (!args.rates.empty()) {
    rates = rate_field_from_table(read_rates_table_csv(args.rates, communities, years),
                                  communities);
  } else if (!args.pop_points.empty() && !args.svc_points.empty()) {
    rates = rate_field_from_points(read_yearly_points_csv(args.pop_points),
                                   read_yearly_points_csv(args.svc_points), years,
                                   args.bandwidth);
  } else {
    throw Error(ErrorKind::config,
                "need --rates, or --pop-points and --service-points for smoothing");
  }

  double beta = 0.0;
  bool estimated = false;
  if (args.beta == "estimate") {
    // Pool costs and weights over all sample points and years.
    std::vector<double> costs, weights;
    std::size_t pid = 0;
    for (const auto& c : communities)
      for (const auto& u : c.sample_points) {
        for (std::size_t yi = 0; yi < years.size(); ++yi) {
          costs.push_back(travel_cost(net, pid, u, years[yi], args.q));
          const double svc = rates.service(u, yi);
          if (!(svc > 0.0))
            throw Error(ErrorKind::validation, "service rate is zero while estimating beta");
          weights.push_back(std::max(rates.population(u, yi), 1e-12) / svc);
        }
        ++pid;
      }
    beta = estimate_beta(costs, weights);
    estimated = true;
    log_info("estimated beta = " + format_double(beta));
  } else {
    try {
      beta = std::stod(args.beta);
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, "--beta must be a number or 'estimate'");
    }
  }

  const auto panel = accessibility_panel(net, communities, rates, args.q, beta,
                                         args.common.threads);

  std::map<std::string, std::string> opts = {
      {"sites", args.sites},       {"communities", args.communities},
      {"rates", args.rates},       {"pop_points", args.pop_points},
      {"svc_points", args.svc_points}, {"bandwidth", format_double(args.bandwidth)},
      {"distances", args.distances},   {"graph_vertices", args.graph_vertices},
      {"graph_edges", args.graph_edges}, {"q", std::to_string(args.q)},
      {"beta", args.beta},         {"seed", std::to_string(args.common.seed)}};
  Meta meta = base_meta("access", args.common, opts);
  meta["beta_estimated"] = estimated ? "true" : "false";
  write_access_csv(args.common.out, panel, meta);
  log_info("wrote " + args.common.out);
  return 0;
}

// ---------------------------------------------------------------------------
// fit / fit-multilevel

struct FitArgs {
  std::string panel;
  int knots_temporal = 7;
  int knots_spatial = 10;
  double d_temporal = 0.0;  // multilevel separations; 0 = default rule
  double d_spatial = 0.0;
  CommonArgs common;
};

KnotLayout select_knots(const std::vector<double>& times, const std::vector<Point>& locations,
                        int m, int n, std::uint64_t seed) {
  KnotLayout k;
  k.temporal = select_temporal_knots(times, m);
  k.spatial = select_spatial_knots(locations, n, seed);
  k.seed = seed;
  return k;
}

int run_fit(const FitArgs& args) {
  const auto panel = read_panel_csv(args.panel);
  const auto knots = select_knots(panel.times, panel.locations, args.knots_temporal,
                                  args.knots_spatial, args.common.seed);
  log_info("assembling design");
  const auto design = assemble_design(panel, knots);
  log_info("fitting by REML");
  const auto fit = fit_reml(design, design.response);

  std::map<std::string, std::string> opts = {
      {"panel", args.panel},
      {"knots_temporal", std::to_string(args.knots_temporal)},
      {"knots_spatial", std::to_string(args.knots_spatial)},
      {"seed", std::to_string(args.common.seed)}};
  write_file(args.common.out, model_to_json(fit, base_meta("fit", args.common, opts)));
  log_info("wrote " + args.common.out);
  return 0;
}

int run_fit_multilevel(const FitArgs& args) {
  const auto panel = read_multilevel_panel_csv(args.panel);
  KnotLayout base = select_knots(panel.times, panel.locations, args.knots_temporal,
                                 args.knots_spatial, args.common.seed);
  const int p_cnt = static_cast<int>(panel.n_providers());

  double d_t = args.d_temporal;
  if (!(d_t > 0.0)) {
    double spacing = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < base.temporal.size(); ++i)
      spacing = std::min(spacing, base.temporal[i] - base.temporal[i - 1]);
    if (!std::isfinite(spacing))
      spacing = base.temporal.front() != 0.0 ? std::abs(base.temporal.front()) : 1.0;
    d_t = 0.25 * spacing / (p_cnt + 1);
  }
  double d_s = args.d_spatial;
  if (!(d_s > 0.0)) {
    double nnd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < base.spatial.size(); ++i)
      for (std::size_t j = i + 1; j < base.spatial.size(); ++j)
        nnd = std::min(nnd, distance(base.spatial[i], base.spatial[j]));
    if (!std::isfinite(nnd)) nnd = 1.0;
    d_s = 0.25 * nnd / (p_cnt + 1);
  }

  const auto knots = separate_knots(base, p_cnt, d_t, d_s, args.common.seed);
  log_info("fitting multilevel model over " + std::to_string(p_cnt) + " providers");
  const auto fit = fit_multilevel(panel, knots);

  std::map<std::string, std::string> opts = {
      {"panel", args.panel},
      {"knots_temporal", std::to_string(args.knots_temporal)},
      {"knots_spatial", std::to_string(args.knots_spatial)},
      {"d_temporal", format_double(d_t)},
      {"d_spatial", format_double(d_s)},
      {"seed", std::to_string(args.common.seed)}};
  write_file(args.common.out,
             multilevel_to_json(fit, base_meta("fit-multilevel", args.common, opts)));
  log_info("wrote " + args.common.out);
  return 0;
}

// ---------------------------------------------------------------------------
// bands / shape

struct BandArgs {
  std::string model;
  int predictor = 1;  // 1-based on the CLI
  std::string part = "temporal";
  double level = 0.95;
  double joint_level = 0.95;
  int draws = 10000;
  std::string grid_file;
  std::string sig_out;
  std::string band_out;  // for shape
  bool planar = false;
  bool on_total = false;
  CommonArgs common;
};

BandPart parse_part(const std::string& part) {
  if (part == "temporal") return BandPart::temporal;
  if (part == "spatial") return BandPart::spatial;
  if (part == "full") return BandPart::full;
  throw Error(ErrorKind::config, "--part must be temporal, spatial or full");
}

EvalGrid default_grid(BandPart part, const std::vector<double>& times,
                      const std::vector<Point>& locations) {
  switch (part) {
    case BandPart::temporal: return EvalGrid::Temporal(times);
    case BandPart::spatial: return EvalGrid::Spatial(locations);
    case BandPart::full: {
      std::vector<double> ts;
      std::vector<Point> ps;
      if (times.size() * locations.size() > 20000)
        throw Error(ErrorKind::config,
                    "full grid would be too large; supply --grid with (time,s1,s2) rows");
      for (const auto& s : locations)
        for (double t : times) {
          ts.push_back(t);
          ps.push_back(s);
        }
      return EvalGrid::Full(std::move(ts), std::move(ps));
    }
  }
  throw Error(ErrorKind::config, "unknown band part");
}

EvalGrid grid_from_file(BandPart part, const std::string& path) {
  const auto table = read_csv(path);
  std::vector<double> ts;
  std::vector<Point> ps;
  const int c_t = table.column("time");
  const int c_x = table.column("s1");
  const int c_y = table.column("s2");
  for (const auto& row : table.rows) {
    if (c_t >= 0) ts.push_back(std::stod(row[static_cast<std::size_t>(c_t)]));
    if (c_x >= 0 && c_y >= 0)
      ps.push_back({std::stod(row[static_cast<std::size_t>(c_x)]),
                    std::stod(row[static_cast<std::size_t>(c_y)])});
  }
  switch (part) {
    case BandPart::temporal:
      if (ts.empty()) throw Error(ErrorKind::io, "--grid needs a time column");
      return EvalGrid::Temporal(std::move(ts));
    case BandPart::spatial:
      if (ps.empty()) throw Error(ErrorKind::io, "--grid needs s1 and s2 columns");
      return EvalGrid::Spatial(std::move(ps));
    case BandPart::full:
      if (ts.empty() || ps.size() != ts.size())
        throw Error(ErrorKind::io, "--grid needs matching time, s1, s2 columns");
      return EvalGrid::Full(std::move(ts), std::move(ps));
  }
  throw Error(ErrorKind::config, "unknown band part");
}

std::string provider_out_path(const std::string& out, const std::string& provider) {
  const auto dot = out.rfind('.');
  if (dot == std::string::npos) return out + "." + provider;
  return out.substr(0, dot) + "." + provider + out.substr(dot);
}

int run_bands(const BandArgs& args) {
  const std::string text = read_file(args.model);
  const BandPart part = parse_part(args.part);
  const int r = args.predictor - 1;

  std::map<std::string, std::string> opts = {
      {"model", args.model},           {"predictor", std::to_string(args.predictor)},
      {"part", args.part},             {"level", format_double(args.level)},
      {"joint_level", format_double(args.joint_level)}, {"draws", std::to_string(args.draws)},
      {"grid", args.grid_file},        {"seed", std::to_string(args.common.seed)},
      {"on_total", args.on_total ? "true" : "false"}};
  Meta meta = base_meta("bands", args.common, opts);

  // Multilevel artifacts get Bonferroni joint bands, one file per provider.
  if (text.find("\"kind\":\"multilevel\"") != std::string::npos) {
    const auto fit = multilevel_from_json(text);
    const EvalGrid grid = args.grid_file.empty()
                              ? default_grid(part, fit.observed_times, fit.observed_locations)
                              : grid_from_file(part, args.grid_file);
    const double rho = 1.0 - args.joint_level;
    const auto bands = joint_bands(fit, r, part, rho, grid, args.draws, args.common.seed,
                                   args.on_total, args.common.threads);
    for (std::size_t p = 0; p < bands.size(); ++p) {
      Meta m = meta;
      m["provider"] = fit.providers[p];
      const std::string path = provider_out_path(args.common.out, fit.providers[p]);
      write_band_csv(path, bands[p], m);
      log_info("wrote " + path);
    }
    return 0;
  }

  const auto fit = model_from_json(text);
  const EvalGrid grid = args.grid_file.empty()
                            ? default_grid(part, fit.observed_times, fit.observed_locations)
                            : grid_from_file(part, args.grid_file);
  const auto band = simultaneous_band(fit, r, part, grid, 1.0 - args.level, args.draws,
                                      args.common.seed, args.common.threads);
  write_band_csv(args.common.out, band, meta);
  log_info("wrote " + args.common.out);
  if (!args.sig_out.empty()) {
    std::vector<std::string> ids;
    if (part == BandPart::spatial && args.grid_file.empty())
      for (std::size_t j = 0; j < fit.observed_locations.size(); ++j)
        ids.push_back("s" + std::to_string(j + 1));
    write_significance_csv(args.sig_out, band, ids, meta);
    log_info("wrote " + args.sig_out);
  }
  return 0;
}

int run_shape(const BandArgs& args) {
  const std::string text = read_file(args.model);
  const BandPart part = parse_part(args.part);
  if (part == BandPart::full)
    throw Error(ErrorKind::config, "shape classification needs --part temporal or spatial");
  const auto fit = model_from_json(text);
  const int r = args.predictor - 1;
  const EvalGrid grid = args.grid_file.empty()
                            ? default_grid(part, fit.observed_times, fit.observed_locations)
                            : grid_from_file(part, args.grid_file);
  const auto band = simultaneous_band(fit, r, part, grid, 1.0 - args.level, args.draws,
                                      args.common.seed, args.common.threads);
  const ShapeVerdict verdict =
      args.planar ? classify_shape_planar(band) : classify_shape(band);

  std::map<std::string, std::string> opts = {
      {"model", args.model},    {"predictor", std::to_string(args.predictor)},
      {"part", args.part},      {"level", format_double(args.level)},
      {"draws", std::to_string(args.draws)}, {"grid", args.grid_file},
      {"planar", args.planar ? "true" : "false"}, {"seed", std::to_string(args.common.seed)}};
  Meta meta = base_meta("shape", args.common, opts);
  write_file(args.common.out, verdict_to_json(verdict, meta));
  log_info("wrote " + args.common.out);
  if (!args.band_out.empty()) {
    write_band_csv(args.band_out, band, meta);
    log_info("wrote " + args.band_out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// test-interaction

struct InteractionArgs {
  std::string panel;
  std::string model;  // optional source of knots
  int knots_temporal = 0;
  int knots_spatial = 0;
  int predictor = 1;
  int boot = 1000;
  CommonArgs common;
};

int run_test_interaction(const InteractionArgs& args) {
  const auto panel = read_panel_csv(args.panel);
  KnotLayout knots;
  InteractionTestOptions opts;
  if (!args.model.empty()) {
    const auto fit = model_from_json(read_file(args.model));
    knots = fit.knots;
    opts.design = fit.design_options;
  } else if (args.knots_temporal > 0 && args.knots_spatial > 0) {
    knots = select_knots(panel.times, panel.locations, args.knots_temporal, args.knots_spatial,
                         args.common.seed);
  } else {
    throw Error(ErrorKind::config,
                "need --model or both --knots-temporal and --knots-spatial");
  }
  opts.threads = args.common.threads;
  const auto test = test_interaction(panel, knots, args.predictor - 1, args.boot,
                                     args.common.seed, opts);

  std::map<std::string, std::string> copts = {
      {"panel", args.panel},     {"model", args.model},
      {"knots_temporal", std::to_string(args.knots_temporal)},
      {"knots_spatial", std::to_string(args.knots_spatial)},
      {"predictor", std::to_string(args.predictor)},
      {"boot", std::to_string(args.boot)},
      {"seed", std::to_string(args.common.seed)}};
  write_file(args.common.out,
             interaction_to_json(test, base_meta("test-interaction", args.common, copts)));
  log_info("wrote " + args.common.out);
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string scenario;
  double snr = 0.0;
  std::string truth_out;
  CommonArgs common;
};

int run_simulate(const SimulateArgs& args) {
  SimulationScenario sc;
  double file_snr = 0.0;
  if (!args.scenario.empty()) {
    sc = scenario_from_json(read_file(args.scenario), &file_snr);
  } else {
    sc = SimulationScenario::paper_default(args.common.seed);
  }
  sc.seed = args.common.seed;
  double snr = args.snr > 0.0 ? args.snr : file_snr;
  if (snr > 0.0) sc.noise_sd = noise_sd_for_snr(sc, snr);

  const auto gen = generate(sc);
  std::map<std::string, std::string> opts = {
      {"scenario", args.scenario},
      {"snr", format_double(snr)},
      {"noise_sd", format_double(sc.noise_sd)},
      {"S", std::to_string(sc.S)},
      {"T", std::to_string(sc.T)},
      {"seed", std::to_string(args.common.seed)}};
  Meta meta = base_meta("simulate", args.common, opts);
  meta["noise_sd"] = format_double(sc.noise_sd);
  meta["signal_sd"] = format_double(gen.signal_sd);
  write_panel_csv(args.common.out, gen.panel, meta);
  log_info("wrote " + args.common.out);
  if (!args.truth_out.empty()) {
    write_truth_csv(args.truth_out, gen, meta);
    log_info("wrote " + args.truth_out);
  }
  return 0;
}

void add_common(CLI::App* cmd, CommonArgs& common, bool needs_out = true) {
  cmd->add_option("--seed", common.seed, "64-bit seed; all randomness derives from it");
  cmd->add_option("--threads", common.threads, "worker threads (results are thread-count independent)")
      ->check(CLI::Range(1, 256));
  auto* out = cmd->add_option("--out", common.out, "output artifact path");
  if (needs_out) out->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"space-time varying coefficient models: accessibility panels, REML fits, "
               "simultaneous bands, shape tests, interaction tests, simulation"};
  app.require_subcommand(1);

  AccessArgs access;
  auto* cmd_access = app.add_subcommand("access", "compute a utilization-adjusted accessibility panel");
  cmd_access->add_option("--sites", access.sites, "sites CSV (year,x,y)")->required();
  cmd_access->add_option("--communities", access.communities,
                         "communities CSV (community_id,point_index,x,y)")->required();
  cmd_access->add_option("--rates", access.rates,
                         "rate table CSV (community_id,point_index,year,population_rate,service_rate)");
  cmd_access->add_option("--pop-points", access.pop_points, "population point cloud CSV (year,x,y[,weight])");
  cmd_access->add_option("--service-points", access.svc_points, "service point cloud CSV (year,x,y[,weight])");
  cmd_access->add_option("--bandwidth", access.bandwidth,
                         "kernel bandwidth for rate smoothing (default: reference rule)");
  cmd_access->add_option("--distances", access.distances,
                         "precomputed distance CSV (point_id,year,site_index,distance)");
  cmd_access->add_option("--graph-vertices", access.graph_vertices, "graph vertices CSV (vertex_id,x,y)");
  cmd_access->add_option("--graph-edges", access.graph_edges, "graph edges CSV (u,v,weight)");
  cmd_access->add_option("--q", access.q, "number of nearest sites in the travel cost")->check(CLI::PositiveNumber);
  cmd_access->add_option("--beta", access.beta, "distance utility exponent, or 'estimate'");
  add_common(cmd_access, access.common);

  FitArgs fit;
  auto* cmd_fit = app.add_subcommand("fit", "fit the space-time varying coefficient model by REML");
  cmd_fit->add_option("--panel", fit.panel, "panel CSV (location_id,x,y,time,response[,predictors...])")->required();
  cmd_fit->add_option("--knots-temporal", fit.knots_temporal, "temporal knot count M")->check(CLI::PositiveNumber);
  cmd_fit->add_option("--knots-spatial", fit.knots_spatial, "spatial knot count N")->check(CLI::PositiveNumber);
  add_common(cmd_fit, fit.common);

  FitArgs fitml;
  auto* cmd_fitml = app.add_subcommand("fit-multilevel",
                                       "fit the multilevel model with provider deviations");
  cmd_fitml->add_option("--panel", fitml.panel,
                        "panel CSV (provider_id,location_id,x,y,time,response[,predictors...])")->required();
  cmd_fitml->add_option("--knots-temporal", fitml.knots_temporal, "temporal knot count M")->check(CLI::PositiveNumber);
  cmd_fitml->add_option("--knots-spatial", fitml.knots_spatial, "spatial knot count N")->check(CLI::PositiveNumber);
  cmd_fitml->add_option("--d-temporal", fitml.d_temporal, "temporal knot separation d_T (default rule)");
  cmd_fitml->add_option("--d-spatial", fitml.d_spatial, "spatial knot separation d_S (default rule)");
  add_common(cmd_fitml, fitml.common);

  BandArgs bands;
  auto* cmd_bands = app.add_subcommand("bands", "simultaneous confidence bands for a coefficient");
  cmd_bands->add_option("--model", bands.model, "model artifact JSON")->required();
  cmd_bands->add_option("--predictor", bands.predictor, "predictor index (1-based)")->check(CLI::PositiveNumber);
  cmd_bands->add_option("--part", bands.part, "temporal | spatial | full");
  cmd_bands->add_option("--level", bands.level, "band level 1-gamma")->check(CLI::Range(0.0, 1.0));
  cmd_bands->add_option("--joint-level", bands.joint_level,
                        "joint level 1-rho for multilevel Bonferroni bands")->check(CLI::Range(0.0, 1.0));
  cmd_bands->add_option("--draws", bands.draws, "Monte Carlo draws")->check(CLI::PositiveNumber);
  cmd_bands->add_option("--grid", bands.grid_file, "evaluation grid CSV (time and/or s1,s2)");
  cmd_bands->add_option("--sig-out", bands.sig_out, "significance map CSV output");
  cmd_bands->add_flag("--on-total", bands.on_total,
                      "multilevel: bands for gamma_rp instead of the deviation eta_rp");
  add_common(cmd_bands, bands.common);

  BandArgs shape;
  auto* cmd_shape = app.add_subcommand("shape", "classify a coefficient as constant, linear or nonlinear");
  cmd_shape->add_option("--model", shape.model, "model artifact JSON")->required();
  cmd_shape->add_option("--predictor", shape.predictor, "predictor index (1-based)")->check(CLI::PositiveNumber);
  cmd_shape->add_option("--part", shape.part, "temporal | spatial");
  cmd_shape->add_option("--level", shape.level, "band level 1-gamma")->check(CLI::Range(0.0, 1.0));
  cmd_shape->add_option("--draws", shape.draws, "Monte Carlo draws")->check(CLI::PositiveNumber);
  cmd_shape->add_option("--grid", shape.grid_file, "evaluation grid CSV");
  cmd_shape->add_flag("--planar", shape.planar, "planar witness a + b1 s1 + b2 s2 on 2-D spatial grids");
  cmd_shape->add_option("--band-out", shape.band_out, "also write the band CSV");
  add_common(cmd_shape, shape.common);

  InteractionArgs inter;
  auto* cmd_inter = app.add_subcommand("test-interaction",
                                       "restricted LRT for a zero space-time interaction variance");
  cmd_inter->add_option("--panel", inter.panel, "panel CSV")->required();
  cmd_inter->add_option("--model", inter.model, "model artifact JSON supplying the knots");
  cmd_inter->add_option("--knots-temporal", inter.knots_temporal, "temporal knot count M");
  cmd_inter->add_option("--knots-spatial", inter.knots_spatial, "spatial knot count N");
  cmd_inter->add_option("--predictor", inter.predictor, "predictor index (1-based)")->check(CLI::PositiveNumber);
  cmd_inter->add_option("--boot", inter.boot, "parametric bootstrap draws (>= 500)");
  add_common(cmd_inter, inter.common);

  SimulateArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "generate a synthetic panel with recorded truth");
  cmd_sim->add_option("--scenario", sim.scenario, "scenario JSON (default: the S=300, T=15 verification scenario)");
  cmd_sim->add_option("--snr", sim.snr, "signal-to-noise variance ratio (overrides noise_sd)");
  cmd_sim->add_option("--truth-out", sim.truth_out, "write true coefficient surfaces CSV");
  add_common(cmd_sim, sim.common);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cmd_access) return run_access(access);
    if (*cmd_fit) return run_fit(fit);
    if (*cmd_fitml) return run_fit_multilevel(fitml);
    if (*cmd_bands) return run_bands(bands);
    if (*cmd_shape) return run_shape(shape);
    if (*cmd_inter) return run_test_interaction(inter);
    if (*cmd_sim) return run_simulate(sim);
  } catch (const Error& e) {
    if (log_level() >= kLogError)
      std::cerr << "stvcm: error (" << error_kind_name(e.kind()) << "): " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    if (log_level() >= kLogError) std::cerr << "stvcm: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
