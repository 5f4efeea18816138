#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carhail/congestion_analysis.hpp"
#include "carhail/pattern_estimation.hpp"
#include "carhail/road_network.hpp"

namespace carhail {

SpeedMatrix to_real_matrix(const FlowMatrix& flow);

/// One LineString feature per matrix road with properties
/// {road_id, value, ratio}; ratio is the value over the largest finite cell
/// of the whole matrix (0 when that maximum is not positive). Undefined
/// cells export null value and ratio. Throws ExportError for an interval
/// outside the matrix axis or a road missing from the network.
nlohmann::json export_heatmap(const SpeedMatrix& matrix, const RoadNetwork& net,
                              const IntervalIndex& interval);

/// Scatter table "slot,day,value": one row per finite (day, slot) sample.
std::string timeseries_csv(const std::vector<DailyProfile>& days, bool normalized);

/// Overlay plot of all days against time of day. Normalized series use a
/// fixed [0, 1] y-axis. Output depends only on the input values.
std::string timeseries_svg(const std::vector<DailyProfile>& days, bool normalized,
                           const std::string& title);

}  // namespace carhail
