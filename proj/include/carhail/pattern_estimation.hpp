#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "carhail/map_matching.hpp"
#include "carhail/road_network.hpp"
#include "carhail/trace_ingest.hpp"

namespace carhail {

/// Dense road x interval grid, row-major (one row per road).
template <typename T>
struct SpatioTemporalMatrix {
  std::vector<RoadId> road_ids;
  std::vector<IntervalIndex> intervals;
  std::vector<T> values;

  SpatioTemporalMatrix() = default;
  SpatioTemporalMatrix(std::vector<RoadId> roads, std::vector<IntervalIndex> axis, T fill = T{})
      : road_ids(std::move(roads)),
        intervals(std::move(axis)),
        values(road_ids.size() * intervals.size(), fill) {}

  std::size_t rows() const { return road_ids.size(); }
  std::size_t cols() const { return intervals.size(); }

  T& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  std::span<T> row(std::size_t r) { return {values.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }

  std::optional<std::size_t> row_of(RoadId id) const {
    for (std::size_t r = 0; r < road_ids.size(); ++r) {
      if (road_ids[r] == id) return r;
    }
    return std::nullopt;
  }
  std::optional<std::size_t> column_of(const IntervalIndex& interval) const {
    for (std::size_t c = 0; c < intervals.size(); ++c) {
      if (intervals[c] == interval) return c;
    }
    return std::nullopt;
  }

  friend bool operator==(const SpatioTemporalMatrix&, const SpatioTemporalMatrix&) = default;
};

using FlowMatrix = SpatioTemporalMatrix<std::uint32_t>;
using SpeedMatrix = SpatioTemporalMatrix<double>;

inline constexpr double kDefaultPairDtMaxS = 10.0;
inline constexpr double kDefaultAnomalyKmh = 70.0;
inline constexpr double kDefaultMissingFraction = 0.2;

/// Two temporally consecutive pings of one order on one road.
struct TracePair {
  RoadId road_id = 0;
  double d_km = 0.0;
  double dt_s = 0.0;
  double v_kmh = 0.0;
  IntervalIndex interval;  // of the earlier ping
};

/// Pairs of consecutive points (sorted by timestamp, one order) that share a
/// road and satisfy 0 < dt <= max_dt_s.
std::vector<TracePair> build_pairs(std::span<const MatchedPoint> points,
                                   double max_dt_s = kDefaultPairDtMaxS);

/// Arithmetic mean pair speed; 0 when there are no pairs.
double road_mean_speed(std::span<const TracePair> pairs);

/// Number of distinct order ids.
std::size_t flow_count(std::span<const MatchedPoint> points);

struct TensorOptions {
  double pair_dt_max_s = kDefaultPairDtMaxS;
  /// Fixes the interval axis to [first_day, first_day + n_days). Without it
  /// the axis spans every whole day touched by the input.
  std::optional<std::chrono::sys_days> first_day;
  int n_days = 0;
};

struct Tensors {
  FlowMatrix flow;
  SpeedMatrix speed;
  FlowMatrix pair_counts;
  std::size_t points = 0;
  std::size_t orders = 0;
  std::size_t pairs = 0;
  std::size_t outside_axis = 0;  // points dropped by an explicit day range
};

/// Accumulates matched points batch by batch and produces the flow and speed
/// matrices. The result depends only on the multiset of points added, not on
/// how they were split into batches or in which order batches arrived.
class TensorBuilder {
 public:
  explicit TensorBuilder(std::vector<RoadId> road_ids, TensorOptions options = {});

  void add(std::span<const MatchedPoint> batch);
  Tensors finish() const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Point {
    std::uint32_t order;
    std::uint32_t road;
    std::int64_t timestamp;
    double lat;
    double lon;
    std::int32_t day;
    std::int32_t slot;
  };

  std::vector<RoadId> road_ids_;
  std::unordered_map<RoadId, std::uint32_t> road_index_;
  TensorOptions options_;
  std::unordered_map<std::string, std::uint32_t> order_index_;
  std::vector<std::string> order_names_;
  std::vector<Point> points_;
};

Tensors build_tensors(std::span<const MatchedPoint> matched, std::vector<RoadId> road_ids,
                      TensorOptions options = {});

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

struct MissingFilterResult {
  SpeedMatrix retained;
  std::vector<RoadId> dropped;
};

/// Drops roads whose fraction of zero (missing) cells exceeds the threshold.
MissingFilterResult filter_missing(const SpeedMatrix& speeds,
                                   double max_missing_fraction = kDefaultMissingFraction);

struct FilledSeries {
  std::vector<double> values;
  bool flagged = false;  // the row had no observation at all
};

/// Linear interpolation over interior zero runs, constant extension at the
/// ends.
FilledSeries interpolate_missing(std::span<const double> row);

struct RepairedSeries {
  std::vector<double> values;
  std::size_t anomaly_count = 0;
  bool flagged = false;  // every value was anomalous; clamped to the threshold
};

/// Replaces values above `threshold_kmh` with the mean of the nearest
/// non-anomalous value on each side (one side at the edges).
RepairedSeries repair_anomalies(std::span<const double> row,
                                double threshold_kmh = kDefaultAnomalyKmh);

struct CleaningOptions {
  double max_missing_fraction = kDefaultMissingFraction;
  double anomaly_kmh = kDefaultAnomalyKmh;
};

struct CleaningResult {
  SpeedMatrix speed;                 // retained roads, original interval axis
  std::vector<RoadId> dropped;       // too many missing cells
  std::vector<RoadId> flagged;       // retained but no observation at all
  std::vector<RoadId> saturated;     // every value anomalous, clamped to the threshold
  std::size_t anomaly_count = 0;
  double anomaly_rate = 0.0;         // anomalies / retained cells
};

/// filter_missing, then interpolate_missing and repair_anomalies per road.
CleaningResult clean_speed_matrix(const SpeedMatrix& speeds, const CleaningOptions& options = {});

}  // namespace carhail
