#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stvcm/accessibility.hpp"
#include "stvcm/basis.hpp"
#include "stvcm/inference.hpp"
#include "stvcm/multilevel.hpp"
#include "stvcm/simulate.hpp"
#include "stvcm/types.hpp"

namespace stvcm {

inline constexpr int kFormatVersion = 1;

// Sorted key=value pairs emitted as leading `# key=value` comment lines in
// CSV files and as a "meta" object in JSON artifacts.
using Meta = std::map<std::string, std::string>;

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// Shortest decimal representation that round-trips the double.
std::string format_double(double v);
// Fixed significant digits (%.<digits>g).
std::string format_double_sig(double v, int digits);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  Meta meta;

  int column(const std::string& name) const;          // -1 when absent
  int require_column(const std::string& name) const;  // throws io error
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const Meta& meta,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Model panel, long format: location_id,x,y,time,response[,<predictor>...].
// Panels without covariate columns get a single all-ones intercept.
SpaceTimePanel read_panel_csv(const std::string& path);
void write_panel_csv(const std::string& path, const SpaceTimePanel& panel, const Meta& meta);

// provider_id,location_id,x,y,time,response[,<predictor>...]
MultilevelPanel read_multilevel_panel_csv(const std::string& path);
void write_multilevel_panel_csv(const std::string& path, const MultilevelPanel& panel,
                                const Meta& meta);

// Accessibility front end: sites are (year,x,y); communities are
// (community_id,point_index,x,y); rate tables are
// (community_id,point_index,year,population_rate,service_rate); weighted
// point clouds are (year,x,y[,weight]).
std::pair<std::vector<double>, std::vector<std::vector<Point>>> read_sites_csv(
    const std::string& path);
std::vector<Community> read_communities_csv(const std::string& path);

struct RateTable {
  std::vector<double> years;
  // values[(community index, point index)][year index] -> (pop, service)
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::pair<double, double>>> values;
};
RateTable read_rates_table_csv(const std::string& path,
                               const std::vector<Community>& communities,
                               const std::vector<double>& years);
RateField rate_field_from_table(const RateTable& table, const std::vector<Community>& communities);

struct YearlyPoints {
  std::vector<double> years;
  std::vector<std::vector<Point>> points;    // per year
  std::vector<std::vector<double>> weights;  // per year; empty -> unit
};
YearlyPoints read_yearly_points_csv(const std::string& path);
// Smoothed intensity field over the two clouds; bandwidth <= 0 selects the
// reference rule per year.
RateField rate_field_from_points(const YearlyPoints& population, const YearlyPoints& service,
                                 const std::vector<double>& years, double bandwidth);

// community_id,year,value at 12 significant digits.
void write_access_csv(const std::string& path, const AccessibilityPanel& panel, const Meta& meta);

// grid columns depend on the mode: time / (s1,s2) / both.
void write_band_csv(const std::string& path, const ConfidenceBand& band, const Meta& meta);
void write_significance_csv(const std::string& path, const ConfidenceBand& band,
                            const std::vector<std::string>& labels_ids, const Meta& meta);
// (predictor,location_id,time,value)
void write_truth_csv(const std::string& path, const GeneratedPanel& gen, const Meta& meta);

// JSON artifacts; all carry format/format_version and a meta object, and
// loaders reject version mismatches.
std::string knots_to_json(const KnotLayout& knots, const Meta& meta);
KnotLayout knots_from_json(const std::string& text);

std::string model_to_json(const FittedModel& model, const Meta& meta);
FittedModel model_from_json(const std::string& text);

std::string multilevel_to_json(const MultilevelFit& fit, const Meta& meta);
MultilevelFit multilevel_from_json(const std::string& text);

std::string scenario_to_json(const SimulationScenario& scenario, const Meta& meta);
// Returns the scenario and an optional "snr" entry (noise_sd then derived by
// the caller via noise_sd_for_snr).
SimulationScenario scenario_from_json(const std::string& text, double* snr_out = nullptr);

std::string verdict_to_json(const ShapeVerdict& verdict, const Meta& meta);
std::string interaction_to_json(const InteractionTest& test, const Meta& meta);

}  // namespace stvcm
