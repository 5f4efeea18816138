#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "carhail/map_matching.hpp"
#include "carhail/pattern_estimation.hpp"

namespace carhail::synth {

/// Gaussian bump in a daily demand curve.
struct DemandPeak {
  double hour = 8.0;
  double amplitude = 1.0;
  double width_h = 1.0;
};

/// 96 slot weights: a floor plus the given peaks.
std::vector<double> demand_from_peaks(const std::vector<DemandPeak>& peaks, double floor = 0.05);
std::vector<double> bimodal_profile();    // 08:00 and 18:00
std::vector<double> multipeak_profile();  // 08:30, 12:00, 18:00, 21:30
std::vector<double> flat_profile();

/// Deterministic description of a synthetic city and its car-hailing traffic.
/// Roads form a grid of `grid_cols` x `grid_rows` nodes spaced `segment_km`
/// apart; every edge between adjacent nodes is one road.
struct Scenario {
  std::uint64_t seed = 1;
  int grid_cols = 9;
  int grid_rows = 9;
  double segment_km = 1.0;
  LatLon origin{30.60, 104.00};  // south-west node

  std::chrono::sys_days first_day{std::chrono::year{2016} / 10 / 1};
  int days = 1;
  std::int64_t tz_offset_s = kDefaultTzOffsetSeconds;
  int orders_per_day = 200;
  int drivers = 50;
  std::vector<double> demand_profile = bimodal_profile();  // 96 weights
  std::vector<double> day_scale;                           // per-day demand factor

  double speed_min_kmh = 20.0;  // per-road truth speed ~ U[min, max]
  double speed_max_kmh = 50.0;
  std::vector<double> speed_factor;  // optional 96 per-slot multipliers

  double ping_period_s = 3.0;
  int min_trip_segments = 2;
  int max_trip_segments = 8;

  double noise_std_deg = 0.0;
  OffsetVector injected_offset;  // added to every emitted ping
  double anomaly_rate = 0.0;     // fraction of pings displaced along their road
  bool supply_free_flow = false;

  /// Throws ConfigError for infeasible settings.
  void validate() const;
};

/// Parses `key = value` lines ('#' comments). Unknown keys throw ConfigError.
Scenario parse_scenario(std::string_view text, Scenario base = {});
Scenario load_scenario(const std::filesystem::path& path, Scenario base = {});
/// Applies a single `key=value` override.
void set_scenario_param(Scenario& scenario, std::string_view key, std::string_view value);

/// Analytic ground truth of a generated scenario, computed from the
/// generator's own road labels and along-road positions.
struct GroundTruth {
  FlowMatrix flow;
  SpeedMatrix speed;         // pair-mean with exact path distances; 0 when no pair
  FlowMatrix pair_counts;
  std::vector<double> kinematic_speed_kmh;  // commanded base speed, aligned with road ids
  std::uint64_t pings = 0;
  std::uint64_t orders = 0;
  std::uint64_t dropped_near_node = 0;
  std::uint64_t anomalous_pings = 0;
};

struct SyntheticData {
  std::string network_geojson;
  std::string traces_csv;
  GroundTruth truth;
};

SyntheticData generate(const Scenario& scenario);

/// Writes network.geojson, traces.csv, truth_flow.csv, truth_speed.csv and
/// truth.json into `dir`.
void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir);

struct ErrorReport {
  std::size_t cells = 0;
  double max_abs = 0.0;
  double mean_abs = 0.0;
  double max_rel = 0.0;             // over cells with non-zero truth
  double mean_rel = 0.0;
  std::size_t mismatched = 0;       // cells that differ at all
  std::size_t zero_mismatch = 0;    // truth zero, estimate not (or vice versa)
  bool exact = true;
};

/// Cell-wise comparison. Throws std::invalid_argument when axes differ.
template <typename T>
ErrorReport compare(const SpatioTemporalMatrix<T>& estimated, const SpatioTemporalMatrix<T>& truth);

extern template ErrorReport compare(const FlowMatrix&, const FlowMatrix&);
extern template ErrorReport compare(const SpeedMatrix&, const SpeedMatrix&);

}  // namespace carhail::synth
