#include "stvcm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace stvcm {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorKind::io, "write failed for " + path);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_double_sig(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return std::string(buf);
}

namespace {

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::io, "cannot parse number '" + s + "' in " + what);
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

int CsvTable::require_column(const std::string& name) const {
  const int c = column(name);
  if (c < 0) throw Error(ErrorKind::io, "missing CSV column '" + name + "'");
  return c;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  CsvTable table;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.substr(1);
      const auto eq = body.find('=');
      if (eq != std::string::npos) {
        std::string key = body.substr(0, eq);
        std::string val = body.substr(eq + 1);
        const auto strip = [](std::string& s) {
          while (!s.empty() && s.front() == ' ') s.erase(s.begin());
          while (!s.empty() && s.back() == ' ') s.pop_back();
        };
        strip(key);
        strip(val);
        table.meta[key] = val;
      }
      continue;
    }
    if (!have_header) {
      table.header = split_csv_line(line);
      have_header = true;
    } else {
      auto row = split_csv_line(line);
      if (row.size() != table.header.size())
        throw Error(ErrorKind::io, "ragged CSV row in " + path);
      table.rows.push_back(std::move(row));
    }
  }
  if (!have_header) throw Error(ErrorKind::io, "empty CSV (no header) in " + path);
  return table;
}

void write_csv(const std::string& path, const Meta& meta,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  for (const auto& [k, v] : meta) os << "# " << k << "=" << v << "\n";
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  write_file(path, os.str());
}

namespace {

// Shared long-format reader; provider column optional.
struct LongPanel {
  std::vector<std::string> providers;  // empty for single level
  std::vector<std::string> location_ids;
  std::vector<Point> locations;
  std::vector<double> times;
  std::vector<std::string> predictor_names;
  // rows: (provider idx or 0, location idx, time idx, response, covariates)
  struct Row {
    std::size_t p, j, i;
    double y;
    std::vector<double> x;
  };
  std::vector<Row> rows;
};

LongPanel read_long(const CsvTable& table, bool with_provider, const std::string& path) {
  LongPanel lp;
  const int c_prov = with_provider ? table.require_column("provider_id") : -1;
  const int c_id = table.require_column("location_id");
  const int c_x = table.require_column("x");
  const int c_y = table.require_column("y");
  const int c_t = table.require_column("time");
  const int c_resp = table.require_column("response");
  std::vector<int> c_pred;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    const int ic = static_cast<int>(i);
    if (ic == c_prov || ic == c_id || ic == c_x || ic == c_y || ic == c_t || ic == c_resp)
      continue;
    c_pred.push_back(ic);
    lp.predictor_names.push_back(table.header[i]);
  }

  std::map<std::string, std::size_t> prov_idx, loc_idx;
  std::map<double, std::size_t> time_idx;
  for (const auto& row : table.rows) {
    LongPanel::Row r;
    if (with_provider) {
      const std::string& pid = row[static_cast<std::size_t>(c_prov)];
      auto [it, inserted] = prov_idx.try_emplace(pid, lp.providers.size());
      if (inserted) lp.providers.push_back(pid);
      r.p = it->second;
    } else {
      r.p = 0;
    }
    const std::string& lid = row[static_cast<std::size_t>(c_id)];
    auto [lit, linserted] = loc_idx.try_emplace(lid, lp.location_ids.size());
    if (linserted) {
      lp.location_ids.push_back(lid);
      lp.locations.push_back({parse_double(row[static_cast<std::size_t>(c_x)], path),
                              parse_double(row[static_cast<std::size_t>(c_y)], path)});
    }
    r.j = lit->second;
    const double t = parse_double(row[static_cast<std::size_t>(c_t)], path);
    auto [tit, tinserted] = time_idx.try_emplace(t, 0);
    r.i = 0;  // filled after sorting times
    r.y = parse_double(row[static_cast<std::size_t>(c_resp)], path);
    for (int c : c_pred) r.x.push_back(parse_double(row[static_cast<std::size_t>(c)], path));
    lp.rows.push_back(std::move(r));
    (void)tit;
  }
  // Times sorted ascending.
  std::vector<double> times;
  for (const auto& [t, _] : time_idx) times.push_back(t);
  std::sort(times.begin(), times.end());
  lp.times = times;
  std::map<double, std::size_t> order;
  for (std::size_t i = 0; i < times.size(); ++i) order[times[i]] = i;
  std::size_t ridx = 0;
  for (const auto& row : table.rows) {
    const double t = parse_double(row[static_cast<std::size_t>(c_t)], path);
    lp.rows[ridx++].i = order[t];
  }
  return lp;
}

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

void fill_grid(const LongPanel& lp, std::size_t provider, Matrix& y,
               std::vector<Matrix>& x, const std::string& path) {
  const Eigen::Index s = static_cast<Eigen::Index>(lp.location_ids.size());
  const Eigen::Index t = static_cast<Eigen::Index>(lp.times.size());
  y = Matrix::Constant(s, t, kMissing);
  const std::size_t r_cnt = lp.predictor_names.empty() ? 1 : lp.predictor_names.size();
  x.assign(r_cnt, Matrix::Constant(s, t, lp.predictor_names.empty() ? 1.0 : kMissing));
  for (const auto& row : lp.rows) {
    if (row.p != provider) continue;
    const Eigen::Index j = static_cast<Eigen::Index>(row.j);
    const Eigen::Index i = static_cast<Eigen::Index>(row.i);
    if (!std::isnan(y(j, i)))
      throw Error(ErrorKind::io, "duplicate panel cell in " + path);
    y(j, i) = row.y;
    for (std::size_t r = 0; r < row.x.size(); ++r) x[r](j, i) = row.x[r];
  }
  // Missing responses are allowed; missing covariates on observed cells not.
  if (!lp.predictor_names.empty())
    for (std::size_t r = 0; r < r_cnt; ++r)
      for (Eigen::Index j = 0; j < s; ++j)
        for (Eigen::Index i = 0; i < t; ++i)
          if (!std::isnan(y(j, i)) && std::isnan(x[r](j, i)))
            throw Error(ErrorKind::io, "missing covariate for an observed cell in " + path);
}

}  // namespace

SpaceTimePanel read_panel_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const LongPanel lp = read_long(table, false, path);
  SpaceTimePanel panel;
  panel.location_ids = lp.location_ids;
  panel.locations = lp.locations;
  panel.times = lp.times;
  panel.predictor_names = lp.predictor_names.empty()
                              ? std::vector<std::string>{"intercept"}
                              : lp.predictor_names;
  fill_grid(lp, 0, panel.response, panel.covariates, path);
  panel.validate();
  return panel;
}

void write_panel_csv(const std::string& path, const SpaceTimePanel& panel, const Meta& meta) {
  std::vector<std::string> header = {"location_id", "x", "y", "time", "response"};
  for (const auto& name : panel.predictor_names) header.push_back(name);
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index j = 0; j < panel.n_locations(); ++j)
    for (Eigen::Index i = 0; i < panel.n_times(); ++i) {
      if (std::isnan(panel.response(j, i))) continue;
      std::vector<std::string> row = {
          panel.location_ids[static_cast<std::size_t>(j)],
          format_double(panel.locations[static_cast<std::size_t>(j)].x),
          format_double(panel.locations[static_cast<std::size_t>(j)].y),
          format_double(panel.times[static_cast<std::size_t>(i)]),
          format_double(panel.response(j, i))};
      for (const auto& x : panel.covariates) row.push_back(format_double(x(j, i)));
      rows.push_back(std::move(row));
    }
  write_csv(path, meta, header, rows);
}

MultilevelPanel read_multilevel_panel_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const LongPanel lp = read_long(table, true, path);
  MultilevelPanel panel;
  panel.providers = lp.providers;
  panel.location_ids = lp.location_ids;
  panel.locations = lp.locations;
  panel.times = lp.times;
  panel.predictor_names = lp.predictor_names.empty()
                              ? std::vector<std::string>{"intercept"}
                              : lp.predictor_names;
  panel.responses.resize(lp.providers.size());
  for (std::size_t p = 0; p < lp.providers.size(); ++p) {
    std::vector<Matrix> x;
    fill_grid(lp, p, panel.responses[p], x, path);
    if (p == 0) panel.covariates = x;
  }
  panel.validate();
  return panel;
}

void write_multilevel_panel_csv(const std::string& path, const MultilevelPanel& panel,
                                const Meta& meta) {
  std::vector<std::string> header = {"provider_id", "location_id", "x", "y", "time", "response"};
  for (const auto& name : panel.predictor_names) header.push_back(name);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t p = 0; p < panel.providers.size(); ++p)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(panel.locations.size()); ++j)
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(panel.times.size()); ++i) {
        if (std::isnan(panel.responses[p](j, i))) continue;
        std::vector<std::string> row = {
            panel.providers[p],
            panel.location_ids[static_cast<std::size_t>(j)],
            format_double(panel.locations[static_cast<std::size_t>(j)].x),
            format_double(panel.locations[static_cast<std::size_t>(j)].y),
            format_double(panel.times[static_cast<std::size_t>(i)]),
            format_double(panel.responses[p](j, i))};
        for (const auto& x : panel.covariates) row.push_back(format_double(x(j, i)));
        rows.push_back(std::move(row));
      }
  write_csv(path, meta, header, rows);
}

std::pair<std::vector<double>, std::vector<std::vector<Point>>> read_sites_csv(
    const std::string& path) {
  const CsvTable table = read_csv(path);
  const int c_year = table.require_column("year");
  const int c_x = table.require_column("x");
  const int c_y = table.require_column("y");
  std::map<double, std::vector<Point>> by_year;
  for (const auto& row : table.rows)
    by_year[parse_double(row[static_cast<std::size_t>(c_year)], path)].push_back(
        {parse_double(row[static_cast<std::size_t>(c_x)], path),
         parse_double(row[static_cast<std::size_t>(c_y)], path)});
  std::vector<double> years;
  std::vector<std::vector<Point>> sites;
  for (auto& [year, pts] : by_year) {
    years.push_back(year);
    sites.push_back(std::move(pts));
  }
  return {years, sites};
}

std::vector<Community> read_communities_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int c_id = table.require_column("community_id");
  const int c_idx = table.require_column("point_index");
  const int c_x = table.require_column("x");
  const int c_y = table.require_column("y");
  std::vector<Community> communities;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::vector<std::pair<long, Point>>> pts;
  for (const auto& row : table.rows) {
    const std::string& id = row[static_cast<std::size_t>(c_id)];
    if (index.try_emplace(id, communities.size()).second) communities.push_back({id, {}});
    pts[id].emplace_back(
        static_cast<long>(parse_double(row[static_cast<std::size_t>(c_idx)], path)),
        Point{parse_double(row[static_cast<std::size_t>(c_x)], path),
              parse_double(row[static_cast<std::size_t>(c_y)], path)});
  }
  for (auto& c : communities) {
    auto& v = pts[c.id];
    std::sort(v.begin(), v.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [idx, p] : v) c.sample_points.push_back(p);
  }
  return communities;
}

RateTable read_rates_table_csv(const std::string& path,
                               const std::vector<Community>& communities,
                               const std::vector<double>& years) {
  const CsvTable table = read_csv(path);
  const int c_id = table.require_column("community_id");
  const int c_idx = table.require_column("point_index");
  const int c_year = table.require_column("year");
  const int c_pop = table.require_column("population_rate");
  const int c_svc = table.require_column("service_rate");

  std::map<std::string, std::size_t> comm_index;
  for (std::size_t i = 0; i < communities.size(); ++i) comm_index[communities[i].id] = i;
  std::map<double, std::size_t> year_index;
  for (std::size_t i = 0; i < years.size(); ++i) year_index[years[i]] = i;

  RateTable rt;
  rt.years = years;
  for (const auto& row : table.rows) {
    const auto cit = comm_index.find(row[static_cast<std::size_t>(c_id)]);
    if (cit == comm_index.end())
      throw Error(ErrorKind::io,
                  "rates table names unknown community " + row[static_cast<std::size_t>(c_id)]);
    const std::size_t b =
        static_cast<std::size_t>(parse_double(row[static_cast<std::size_t>(c_idx)], path));
    const double year = parse_double(row[static_cast<std::size_t>(c_year)], path);
    const auto yit = year_index.find(year);
    if (yit == year_index.end()) continue;  // rates for years outside the network are ignored
    auto& slot = rt.values[{cit->second, b}];
    if (slot.empty()) slot.assign(years.size(), {-1.0, -1.0});
    slot[yit->second] = {parse_double(row[static_cast<std::size_t>(c_pop)], path),
                         parse_double(row[static_cast<std::size_t>(c_svc)], path)};
  }
  return rt;
}

RateField rate_field_from_table(const RateTable& table,
                                const std::vector<Community>& communities) {
  // Index sample points by exact coordinates.
  auto lookup = std::make_shared<std::map<std::pair<double, double>,
                                          std::pair<std::size_t, std::size_t>>>();
  for (std::size_t s = 0; s < communities.size(); ++s)
    for (std::size_t b = 0; b < communities[s].sample_points.size(); ++b) {
      const Point& p = communities[s].sample_points[b];
      (*lookup)[{p.x, p.y}] = {s, b};
    }
  auto values = std::make_shared<RateTable>(table);
  auto fetch = [lookup, values](const Point& p, std::size_t yi) {
    const auto it = lookup->find({p.x, p.y});
    if (it == lookup->end())
      throw Error(ErrorKind::validation, "no rate entry for sample point");
    const auto vit = values->values.find(it->second);
    if (vit == values->values.end() || vit->second[yi].first < 0.0)
      throw Error(ErrorKind::validation, "rate table missing an entry for a sample point/year");
    return vit->second[yi];
  };
  RateField field;
  field.population = [fetch](const Point& p, std::size_t yi) { return fetch(p, yi).first; };
  field.service = [fetch](const Point& p, std::size_t yi) { return fetch(p, yi).second; };
  return field;
}

YearlyPoints read_yearly_points_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int c_year = table.require_column("year");
  const int c_x = table.require_column("x");
  const int c_y = table.require_column("y");
  const int c_w = table.column("weight");
  std::map<double, std::pair<std::vector<Point>, std::vector<double>>> by_year;
  for (const auto& row : table.rows) {
    auto& slot = by_year[parse_double(row[static_cast<std::size_t>(c_year)], path)];
    slot.first.push_back({parse_double(row[static_cast<std::size_t>(c_x)], path),
                          parse_double(row[static_cast<std::size_t>(c_y)], path)});
    slot.second.push_back(
        c_w >= 0 ? parse_double(row[static_cast<std::size_t>(c_w)], path) : 1.0);
  }
  YearlyPoints yp;
  for (auto& [year, slot] : by_year) {
    yp.years.push_back(year);
    yp.points.push_back(std::move(slot.first));
    yp.weights.push_back(std::move(slot.second));
  }
  return yp;
}

RateField rate_field_from_points(const YearlyPoints& population, const YearlyPoints& service,
                                 const std::vector<double>& years, double bandwidth) {
  auto pick = [](const YearlyPoints& yp, double year) -> std::size_t {
    for (std::size_t i = 0; i < yp.years.size(); ++i)
      if (yp.years[i] == year) return i;
    throw Error(ErrorKind::validation,
                "point cloud has no data for year " + std::to_string(year));
  };
  auto pop = std::make_shared<YearlyPoints>(population);
  auto svc = std::make_shared<YearlyPoints>(service);
  auto yrs = std::make_shared<std::vector<double>>(years);

  auto eval = [bandwidth](const YearlyPoints& yp, std::size_t yi, const Point& p) {
    const auto& pts = yp.points[yi];
    const auto& w = yp.weights[yi];
    double h = bandwidth;
    if (!(h > 0.0)) h = silverman_bandwidth(pts);
    const Point grid[1] = {p};
    return smooth_rate(pts, w, grid, h)[0];
  };
  RateField field;
  field.bandwidth = bandwidth;
  field.population = [pop, yrs, eval, pick](const Point& p, std::size_t yi) {
    return eval(*pop, pick(*pop, (*yrs)[yi]), p);
  };
  field.service = [svc, yrs, eval, pick](const Point& p, std::size_t yi) {
    return eval(*svc, pick(*svc, (*yrs)[yi]), p);
  };
  return field;
}

void write_access_csv(const std::string& path, const AccessibilityPanel& panel,
                      const Meta& meta) {
  Meta m = meta;
  m["beta"] = format_double(panel.beta);
  m["q"] = std::to_string(panel.q_nearest);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t s = 0; s < panel.community_ids.size(); ++s)
    for (std::size_t yi = 0; yi < panel.years.size(); ++yi)
      rows.push_back({panel.community_ids[s], format_double(panel.years[yi]),
                      format_double_sig(panel.values(static_cast<Eigen::Index>(s),
                                                     static_cast<Eigen::Index>(yi)),
                                        12)});
  write_csv(path, m, {"community_id", "year", "value"}, rows);
}

void write_band_csv(const std::string& path, const ConfidenceBand& band, const Meta& meta) {
  Meta m = meta;
  m["level"] = format_double(band.level);
  m["critical_value"] = format_double(band.critical_value);
  m["draws"] = std::to_string(band.n_draws);
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  const auto emit = [&](std::size_t i, std::vector<std::string> grid_cols) {
    grid_cols.push_back(format_double(band.center(static_cast<Eigen::Index>(i))));
    grid_cols.push_back(format_double(band.lower(static_cast<Eigen::Index>(i))));
    grid_cols.push_back(format_double(band.upper(static_cast<Eigen::Index>(i))));
    grid_cols.push_back(format_double(band.se(static_cast<Eigen::Index>(i))));
    rows.push_back(std::move(grid_cols));
  };
  switch (band.grid.mode) {
    case EvalGrid::Mode::temporal:
      header = {"time", "center", "lower", "upper", "se"};
      for (std::size_t i = 0; i < band.grid.times.size(); ++i)
        emit(i, {format_double(band.grid.times[i])});
      break;
    case EvalGrid::Mode::spatial:
      header = {"s1", "s2", "center", "lower", "upper", "se"};
      for (std::size_t i = 0; i < band.grid.points.size(); ++i)
        emit(i, {format_double(band.grid.points[i].x), format_double(band.grid.points[i].y)});
      break;
    case EvalGrid::Mode::full:
      header = {"time", "s1", "s2", "center", "lower", "upper", "se"};
      for (std::size_t i = 0; i < band.grid.times.size(); ++i)
        emit(i, {format_double(band.grid.times[i]), format_double(band.grid.points[i].x),
                 format_double(band.grid.points[i].y)});
      break;
  }
  write_csv(path, m, header, rows);
}

void write_significance_csv(const std::string& path, const ConfidenceBand& band,
                            const std::vector<std::string>& labels_ids, const Meta& meta) {
  const auto sig = significance_map(band);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < sig.size(); ++i) {
    std::string id = i < labels_ids.size() ? labels_ids[i] : std::to_string(i);
    rows.push_back({std::move(id), significance_name(sig[i])});
  }
  write_csv(path, meta, {"location_id", "label"}, rows);
}

void write_truth_csv(const std::string& path, const GeneratedPanel& gen, const Meta& meta) {
  std::vector<std::vector<std::string>> rows;
  const auto& panel = gen.panel;
  for (std::size_t r = 0; r < gen.truth.size(); ++r)
    for (Eigen::Index j = 0; j < panel.n_locations(); ++j)
      for (Eigen::Index i = 0; i < panel.n_times(); ++i)
        rows.push_back({panel.predictor_names[r],
                        panel.location_ids[static_cast<std::size_t>(j)],
                        format_double(panel.times[static_cast<std::size_t>(i)]),
                        format_double(gen.truth[r](j, i))});
  write_csv(path, meta, {"predictor", "location_id", "time", "value"}, rows);
}

// ---------------------------------------------------------------------------
// JSON artifacts

namespace {

json meta_to_json(const Meta& meta) {
  json j = json::object();
  for (const auto& [k, v] : meta) j[k] = v;
  return j;
}

json vector_to_json(const Vector& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  Eigen::Index i = 0;
  for (const auto& x : j) v(i++) = x.get<double>();
  return v;
}

json matrix_to_json(const Matrix& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = std::move(data);
  return j;
}

Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data.at(k++).get<double>();
  return m;
}

json points_to_json(const std::vector<Point>& pts) {
  json j = json::array();
  for (const auto& p : pts) j.push_back({p.x, p.y});
  return j;
}

std::vector<Point> points_from_json(const json& j) {
  std::vector<Point> pts;
  for (const auto& e : j) pts.push_back({e.at(0).get<double>(), e.at(1).get<double>()});
  return pts;
}

json parse_artifact(const std::string& text, const std::string& expect_format) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, std::string("malformed JSON artifact: ") + e.what());
  }
  if (j.value("format", "") != expect_format)
    throw Error(ErrorKind::io, "artifact is not a " + expect_format + " document");
  const int version = j.value("format_version", -1);
  if (version != kFormatVersion)
    throw Error(ErrorKind::schema_version,
                "artifact format_version " + std::to_string(version) + " does not match " +
                    std::to_string(kFormatVersion));
  return j;
}

json knots_body(const KnotLayout& knots) {
  json j;
  j["temporal"] = knots.temporal;
  j["spatial"] = points_to_json(knots.spatial);
  j["provider_temporal"] = knots.provider_temporal;
  json ps = json::array();
  for (const auto& f : knots.provider_spatial) ps.push_back(points_to_json(f));
  j["provider_spatial"] = std::move(ps);
  j["min_temporal_sep"] = knots.min_temporal_sep;
  j["min_spatial_sep"] = knots.min_spatial_sep;
  j["seed"] = knots.seed;
  return j;
}

KnotLayout knots_body_from(const json& j) {
  KnotLayout knots;
  knots.temporal = j.at("temporal").get<std::vector<double>>();
  knots.spatial = points_from_json(j.at("spatial"));
  knots.provider_temporal = j.at("provider_temporal").get<std::vector<std::vector<double>>>();
  for (const auto& f : j.at("provider_spatial")) knots.provider_spatial.push_back(points_from_json(f));
  knots.min_temporal_sep = j.at("min_temporal_sep").get<double>();
  knots.min_spatial_sep = j.at("min_spatial_sep").get<double>();
  knots.seed = j.at("seed").get<std::uint64_t>();
  return knots;
}

json design_options_body(const DesignOptions& o) {
  json j;
  j["interaction"] = o.interaction;
  j["spatial_kernel"] = o.spatial_kernel == SpatialKernelKind::thin_plate ? "thin-plate" : "matern32";
  j["matern_range"] = o.matern_range;
  return j;
}

DesignOptions design_options_from(const json& j) {
  DesignOptions o;
  o.interaction = j.at("interaction").get<bool>();
  o.spatial_kernel = j.at("spatial_kernel").get<std::string>() == "matern32"
                         ? SpatialKernelKind::matern32
                         : SpatialKernelKind::thin_plate;
  o.matern_range = j.at("matern_range").get<double>();
  return o;
}

json convergence_body(const Convergence& c) {
  json j;
  j["iterations"] = c.iterations;
  j["grad_norm"] = c.grad_norm;
  j["converged"] = c.converged;
  j["best_start"] = c.best_start;
  j["objective_trace"] = c.objective_trace;
  return j;
}

Convergence convergence_from(const json& j) {
  Convergence c;
  c.iterations = j.at("iterations").get<int>();
  c.grad_norm = j.at("grad_norm").get<double>();
  c.converged = j.at("converged").get<bool>();
  c.best_start = j.at("best_start").get<int>();
  c.objective_trace = j.at("objective_trace").get<std::vector<double>>();
  return c;
}

}  // namespace

std::string knots_to_json(const KnotLayout& knots, const Meta& meta) {
  json j;
  j["format"] = "stvcm-knots";
  j["format_version"] = kFormatVersion;
  j["meta"] = meta_to_json(meta);
  j["knots"] = knots_body(knots);
  return j.dump(2) + "\n";
}

KnotLayout knots_from_json(const std::string& text) {
  const json j = parse_artifact(text, "stvcm-knots");
  return knots_body_from(j.at("knots"));
}

std::string model_to_json(const FittedModel& model, const Meta& meta) {
  json j;
  j["format"] = "stvcm-model";
  j["format_version"] = kFormatVersion;
  j["kind"] = "single";
  j["meta"] = meta_to_json(meta);
  j["layout"] = {{"R", model.layout.R},
                 {"M", model.layout.M},
                 {"N", model.layout.N},
                 {"interaction", model.layout.interaction},
                 {"predictor_names", model.layout.predictor_names}};
  j["design_options"] = design_options_body(model.design_options);
  j["knots"] = knots_body(model.knots);
  j["theta"] = vector_to_json(model.theta);
  j["u"] = vector_to_json(model.u);
  j["vc"] = {{"sigma_eps2", model.vc.sigma_eps2},
             {"sigma_T2", model.vc.sigma_T2},
             {"sigma_S2", model.vc.sigma_S2},
             {"sigma_I2", model.vc.sigma_I2},
             {"boundary", model.vc.boundary}};
  j["loglik_reml"] = model.loglik_reml;
  j["convergence"] = convergence_body(model.convergence);
  j["n_rows"] = model.n_rows;
  j["yty"] = model.yty;
  j["aty"] = vector_to_json(model.aty);
  j["ata"] = matrix_to_json(model.ata);
  j["observed_times"] = model.observed_times;
  j["observed_locations"] = points_to_json(model.observed_locations);
  j["missing_mask"] = model.missing_mask;
  return j.dump() + "\n";
}

FittedModel model_from_json(const std::string& text) {
  const json j = parse_artifact(text, "stvcm-model");
  if (j.value("kind", "") != "single")
    throw Error(ErrorKind::io, "model artifact is not a single-level fit");
  FittedModel m;
  m.layout.R = j.at("layout").at("R").get<int>();
  m.layout.M = j.at("layout").at("M").get<int>();
  m.layout.N = j.at("layout").at("N").get<int>();
  m.layout.interaction = j.at("layout").at("interaction").get<bool>();
  m.layout.predictor_names = j.at("layout").at("predictor_names").get<std::vector<std::string>>();
  m.design_options = design_options_from(j.at("design_options"));
  m.knots = knots_body_from(j.at("knots"));
  m.theta = vector_from_json(j.at("theta"));
  m.u = vector_from_json(j.at("u"));
  m.vc.sigma_eps2 = j.at("vc").at("sigma_eps2").get<double>();
  m.vc.sigma_T2 = j.at("vc").at("sigma_T2").get<std::vector<double>>();
  m.vc.sigma_S2 = j.at("vc").at("sigma_S2").get<std::vector<double>>();
  m.vc.sigma_I2 = j.at("vc").at("sigma_I2").get<std::vector<double>>();
  m.vc.boundary = j.at("vc").at("boundary").get<std::vector<std::string>>();
  m.loglik_reml = j.at("loglik_reml").get<double>();
  m.convergence = convergence_from(j.at("convergence"));
  m.n_rows = j.at("n_rows").get<int>();
  m.yty = j.at("yty").get<double>();
  m.aty = vector_from_json(j.at("aty"));
  m.ata = matrix_from_json(j.at("ata"));
  m.observed_times = j.at("observed_times").get<std::vector<double>>();
  m.observed_locations = points_from_json(j.at("observed_locations"));
  m.missing_mask = j.at("missing_mask").get<std::vector<std::uint8_t>>();
  return m;
}

std::string multilevel_to_json(const MultilevelFit& fit, const Meta& meta) {
  json j;
  j["format"] = "stvcm-model";
  j["format_version"] = kFormatVersion;
  j["kind"] = "multilevel";
  j["meta"] = meta_to_json(meta);
  j["layout"] = {{"R", fit.layout.R},     {"M", fit.layout.M},
                 {"N", fit.layout.N},     {"P", fit.layout.P},
                 {"deviations", fit.layout.deviations},
                 {"predictor_names", fit.layout.predictor_names}};
  j["design_options"] = design_options_body(fit.design_options);
  j["knots"] = knots_body(fit.knots);
  j["providers"] = fit.providers;
  j["theta_global"] = vector_to_json(fit.theta_global);
  j["theta_dev"] = matrix_to_json(fit.theta_dev);
  j["u_global"] = vector_to_json(fit.u_global);
  json udev = json::array();
  for (const auto& u : fit.u_dev) udev.push_back(vector_to_json(u));
  j["u_dev"] = std::move(udev);
  j["vc"] = {{"sigma_eps2", fit.sigma_eps2}, {"global_T2", fit.global_T2},
             {"global_S2", fit.global_S2},   {"dev_T2", fit.dev_T2},
             {"dev_S2", fit.dev_S2},         {"dev_I2", fit.dev_I2},
             {"boundary", fit.boundary}};
  j["loglik_reml"] = fit.loglik_reml;
  j["convergence"] = convergence_body(fit.convergence);
  j["constraints_residual"] = fit.constraints_residual;
  j["n_rows"] = fit.n_rows;
  j["yty"] = fit.yty;
  j["aty"] = vector_to_json(fit.aty);
  j["ata"] = matrix_to_json(fit.ata);
  json blocks = json::array();
  for (const auto& b : fit.blocks)
    blocks.push_back({{"component", b.component}, {"begin", b.col_begin}, {"end", b.col_end}});
  j["blocks"] = std::move(blocks);
  j["sigma2_by_component"] = fit.sigma2_by_component;
  j["observed_times"] = fit.observed_times;
  j["observed_locations"] = points_to_json(fit.observed_locations);
  return j.dump() + "\n";
}

MultilevelFit multilevel_from_json(const std::string& text) {
  const json j = parse_artifact(text, "stvcm-model");
  if (j.value("kind", "") != "multilevel")
    throw Error(ErrorKind::io, "model artifact is not a multilevel fit");
  MultilevelFit f;
  f.layout.R = j.at("layout").at("R").get<int>();
  f.layout.M = j.at("layout").at("M").get<int>();
  f.layout.N = j.at("layout").at("N").get<int>();
  f.layout.P = j.at("layout").at("P").get<int>();
  f.layout.deviations = j.at("layout").at("deviations").get<bool>();
  f.layout.predictor_names = j.at("layout").at("predictor_names").get<std::vector<std::string>>();
  f.design_options = design_options_from(j.at("design_options"));
  f.knots = knots_body_from(j.at("knots"));
  f.providers = j.at("providers").get<std::vector<std::string>>();
  f.theta_global = vector_from_json(j.at("theta_global"));
  f.theta_dev = matrix_from_json(j.at("theta_dev"));
  f.u_global = vector_from_json(j.at("u_global"));
  for (const auto& u : j.at("u_dev")) f.u_dev.push_back(vector_from_json(u));
  f.sigma_eps2 = j.at("vc").at("sigma_eps2").get<double>();
  f.global_T2 = j.at("vc").at("global_T2").get<std::vector<double>>();
  f.global_S2 = j.at("vc").at("global_S2").get<std::vector<double>>();
  f.dev_T2 = j.at("vc").at("dev_T2").get<std::vector<double>>();
  f.dev_S2 = j.at("vc").at("dev_S2").get<std::vector<double>>();
  f.dev_I2 = j.at("vc").at("dev_I2").get<std::vector<double>>();
  f.boundary = j.at("vc").at("boundary").get<std::vector<std::string>>();
  f.loglik_reml = j.at("loglik_reml").get<double>();
  f.convergence = convergence_from(j.at("convergence"));
  f.constraints_residual = j.at("constraints_residual").get<double>();
  f.n_rows = j.at("n_rows").get<int>();
  f.yty = j.at("yty").get<double>();
  f.aty = vector_from_json(j.at("aty"));
  f.ata = matrix_from_json(j.at("ata"));
  for (const auto& b : j.at("blocks"))
    f.blocks.push_back({b.at("component").get<int>(), b.at("begin").get<int>(),
                        b.at("end").get<int>()});
  f.sigma2_by_component = j.at("sigma2_by_component").get<std::vector<double>>();
  f.observed_times = j.at("observed_times").get<std::vector<double>>();
  f.observed_locations = points_from_json(j.at("observed_locations"));
  return f;
}

std::string scenario_to_json(const SimulationScenario& scenario, const Meta& meta) {
  json j;
  j["format"] = "stvcm-scenario";
  j["format_version"] = kFormatVersion;
  j["meta"] = meta_to_json(meta);
  j["S"] = scenario.S;
  j["T"] = scenario.T;
  j["noise_sd"] = scenario.noise_sd;
  j["seed"] = scenario.seed;
  json surfaces = json::array();
  for (const auto& s : scenario.surfaces)
    surfaces.push_back({{"kind", surface_kind_name(s.kind)}, {"params", s.params}});
  j["surfaces"] = std::move(surfaces);
  return j.dump(2) + "\n";
}

SimulationScenario scenario_from_json(const std::string& text, double* snr_out) {
  const json j = parse_artifact(text, "stvcm-scenario");
  SimulationScenario sc;
  sc.S = j.at("S").get<int>();
  sc.T = j.at("T").get<int>();
  if (j.contains("noise_sd")) sc.noise_sd = j.at("noise_sd").get<double>();
  if (snr_out) *snr_out = j.value("snr", 0.0);
  sc.seed = j.value("seed", std::uint64_t{1});
  for (const auto& s : j.at("surfaces")) {
    Surface surf;
    surf.kind = surface_kind_from_name(s.at("kind").get<std::string>());
    surf.params = s.value("params", std::vector<double>{});
    sc.surfaces.push_back(std::move(surf));
  }
  return sc;
}

std::string verdict_to_json(const ShapeVerdict& verdict, const Meta& meta) {
  json j;
  j["format"] = "stvcm-shape";
  j["format_version"] = kFormatVersion;
  j["meta"] = meta_to_json(meta);
  j["shape"] = shape_name(verdict.shape);
  j["witness"] = verdict.witness;
  j["level"] = verdict.level;
  return j.dump(2) + "\n";
}

std::string interaction_to_json(const InteractionTest& test, const Meta& meta) {
  json j;
  j["format"] = "stvcm-interaction-test";
  j["format_version"] = kFormatVersion;
  j["meta"] = meta_to_json(meta);
  j["predictor"] = test.predictor;
  j["rlrt_stat"] = test.rlrt_stat;
  j["p_value"] = test.p_value;
  j["null_draws"] = test.null_draws;
  j["method"] = test.method;
  j["seed"] = test.seed;
  j["loglik_full"] = test.loglik_full;
  j["loglik_null"] = test.loglik_null;
  return j.dump(2) + "\n";
}

}  // namespace stvcm
