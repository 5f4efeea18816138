#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carhail/congestion_analysis.hpp"
#include "carhail/map_matching.hpp"
#include "carhail/pattern_estimation.hpp"
#include "carhail/trace_ingest.hpp"

namespace carhail {

inline constexpr double kDefaultMaxMatchKm = 0.05;

struct RunConfig {
  std::filesystem::path traces;
  std::filesystem::path network;
  std::filesystem::path output_dir = "out";

  ColumnLayout layout;
  std::int64_t tz_offset_s = kDefaultTzOffsetSeconds;
  std::size_t chunk_size = 10'000;
  double max_error_rate = 0.01;

  double max_dist_km = kDefaultMaxMatchKm;
  double pair_dt_max_s = kDefaultPairDtMaxS;
  double anomaly_kmh = kDefaultAnomalyKmh;
  double missing_fraction = kDefaultMissingFraction;

  std::optional<OffsetVector> offset;  // skips estimation when set
  std::size_t offset_sample = 10'000;
  std::size_t offset_min_sample = 1'000;

  std::vector<ScenarioGroup> groups;  // empty: one "all" group
  bool all_heatmaps = false;

  /// Throws ConfigError: thresholds must be positive, groups disjoint.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Stage-tagged fatal error; the manifest has already been written.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::exception& cause, bool data_quality);
  const std::string& stage() const { return stage_; }
  bool data_quality() const { return data_quality_; }

 private:
  std::string stage_;
  bool data_quality_;
};

/// ingest -> offset/match -> tensors -> clean -> analyze -> export. Writes all
/// artifacts plus manifest.json into config.output_dir and returns the
/// manifest. On a fatal error writes a manifest with status "failed" and
/// throws StageError.
nlohmann::json run_pipeline(const RunConfig& config);

/// Cleaning, analysis and export from previously written flow.csv and
/// speed_raw.csv in config.output_dir.
nlohmann::json run_analysis(const RunConfig& config);

/// Estimated offset for config.traces against config.network.
OffsetEstimate estimate_dataset_offset(const RunConfig& config, const RoadNetwork& net);

/// Writes the per-scenario scatter CSVs and SVG plots (raw and normalized,
/// DC and CF) for one scenario, reading network_series.csv from the output
/// directory. Returns the written file names.
std::vector<std::string> export_scenario_timeseries(const RunConfig& config,
                                                    const std::string& scenario);

/// Writes heatmap_<matrix>_<label>.geojson from <matrix>.csv in the output
/// directory. `matrix` is one of flow, speed, inrix.
std::filesystem::path export_heatmap_file(const RunConfig& config, const std::string& matrix,
                                          const IntervalIndex& interval);

/// Hex SHA-256 of a file.
std::string file_digest(const std::filesystem::path& path);

}  // namespace carhail
