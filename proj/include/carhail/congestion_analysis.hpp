#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carhail/pattern_estimation.hpp"
#include "carhail/road_network.hpp"

namespace carhail {

inline constexpr double kMinFreeFlowKmh = 5.0;
inline constexpr double kFreeFlowPercentile = 0.85;

enum class FreeFlowSource { supplied, estimated };

struct FreeFlow {
  double kmh = 0.0;
  FreeFlowSource source = FreeFlowSource::estimated;
};

/// 85th percentile (linear interpolation between order statistics) of a
/// cleaned speed row, clamped to [5, anomaly_kmh]. Throws
/// UndefinedValueError for an empty row or one that still contains zeros.
double estimate_free_flow(std::span<const double> speed_row,
                          double anomaly_kmh = kDefaultAnomalyKmh);

/// max(TH/RE - 1, 0). Throws UndefinedValueError unless both speeds are > 0.
double inrix_score(double free_flow_kmh, double road_speed_kmh);

/// Length-weighted mean of the finite entries of `scores`; nullopt when no
/// road has a defined score.
std::optional<double> network_inrix(std::span<const double> scores,
                                    std::span<const double> lengths_km);

struct FittingIndex {
  double f2 = 1.0;
  bool degenerate = false;  // every sample equal; f2 reported as 1
};

/// Dispersion of several days around their per-slot cross-day means:
///   f2 = 1 - sum_(d,j) (y_dj - ybar_j)^2 / sum_(d,j) (y_dj - Ybar)^2
/// with ybar_j the mean over days at slot j and Ybar the grand mean.
/// Throws std::invalid_argument for fewer than two days or ragged input.
FittingIndex fitting_index(const std::vector<std::vector<double>>& day_series);

struct NormalizedSeries {
  std::vector<double> values;
  bool degenerate = false;  // constant input; all zeros
};

NormalizedSeries min_max_normalize(std::span<const double> day_values);

/// INRIX scores of the retained roads. Undefined cells are NaN.
struct CongestionSeries {
  SpatioTemporalMatrix<double> per_road;
  std::vector<FreeFlow> free_flow;           // aligned with per_road rows
  std::vector<double> lengths_km;            // aligned with per_road rows
  std::vector<double> network;               // per interval; NaN when undefined
  std::vector<std::uint32_t> excluded_roads; // per interval, roads without a score
};

/// Scores every retained road that has at least one observation. Roads listed
/// in `exclude` (flagged rows) or missing from `net` are left out entirely.
CongestionSeries compute_congestion(const SpeedMatrix& cleaned, const RoadNetwork& net,
                                    std::span<const RoadId> exclude = {},
                                    double anomaly_kmh = kDefaultAnomalyKmh);

struct DailyAggregate {
  std::chrono::sys_days day;
  std::uint64_t total_cf = 0;
  double mean_dc = 0.0;       // NaN when no interval of the day is defined
  bool partial = false;       // fewer than 96 slots or undefined intervals
};

std::vector<DailyAggregate> daily_aggregates(const FlowMatrix& flow,
                                             const CongestionSeries& congestion);

struct DailyProfile {
  std::chrono::sys_days day;
  std::vector<double> values;                    // 96 slots
  std::optional<std::vector<double>> normalized;
  bool degenerate = false;
  bool complete = true;                          // 96 finite values
};

/// Splits a series over an interval axis into one 96-slot profile per day;
/// slots absent from the axis stay NaN.
std::vector<DailyProfile> daily_profiles(const std::vector<IntervalIndex>& axis,
                                         std::span<const double> values);
/// Network INRIX per slot, one profile per day.
std::vector<DailyProfile> dc_profiles(const CongestionSeries& congestion);
/// Total flow over all roads per slot, one profile per day.
std::vector<DailyProfile> cf_profiles(const FlowMatrix& flow);
void normalize_profiles(std::vector<DailyProfile>& profiles);

struct ScenarioGroup {
  std::string name;
  std::vector<std::chrono::sys_days> days;
};

struct MeasureFit {
  std::optional<FittingIndex> raw;
  std::optional<FittingIndex> normalized;
  std::vector<std::chrono::sys_days> days;   // complete days used
};

struct ScenarioFit {
  std::string name;
  MeasureFit dc;
  MeasureFit cf;
};

/// f2 of the scenario's days before and after per-day min-max normalization.
/// Days with undefined slots are left out; fewer than two usable days leaves
/// the fit empty.
ScenarioFit fit_scenario(const ScenarioGroup& group, const std::vector<DailyProfile>& dc,
                         const std::vector<DailyProfile>& cf);

}  // namespace carhail
