#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "carhail/road_network.hpp"
#include "carhail/trace_ingest.hpp"

namespace carhail {

/// Constant coordinate correction added to every trace point, in degrees.
struct OffsetVector {
  static constexpr double kCapDeg = 0.01;

  double dlat = 0.0;
  double dlon = 0.0;

  bool within_cap(double cap_deg = kCapDeg) const;
  OffsetVector operator-() const { return {-dlat, -dlon}; }
  friend bool operator==(const OffsetVector&, const OffsetVector&) = default;
};

struct OffsetEstimateOptions {
  std::size_t min_sample = 1'000;
  int max_iterations = 100;
  double tolerance_deg = 1e-10;
  double cap_deg = OffsetVector::kCapDeg;
};

struct OffsetEstimate {
  OffsetVector offset;
  int iterations = 0;
  bool converged = false;
  std::size_t sample_size = 0;
  std::size_t inliers = 0;           // points kept by the final robust step
  double median_residual_km = 0.0;   // after applying the offset
};

/// Estimates the single shift that best moves `sample` onto the network.
///
/// Every iteration displaces each (already shifted) point to the closest
/// point of its nearest road, ungated. A displacement only fixes the shift
/// across that road, so the update is the least-squares solution of
/// n_i . delta = r_i over all points (n_i the unit displacement direction,
/// r_i its length), with points beyond three times the median residual
/// trimmed as off-road outliers. Directions no road constrains stay at zero.
///
/// Throws DataQualityError if the sample is smaller than `min_sample` or the
/// estimate falls outside `cap_deg` in either component.
OffsetEstimate estimate_offset(std::span<const TraceRecord> sample, const RoadNetwork& net,
                               const OffsetEstimateOptions& options = {});

struct OffsetApplication {
  std::vector<TraceRecord> records;
  std::size_t skipped = 0;  // translated outside the geographic range
};

OffsetApplication apply_offset(std::vector<TraceRecord> records, const OffsetVector& offset);

struct MatchedPoint {
  TraceRecord record;  // corrected coordinates
  RoadId road_id = 0;
  double match_dist_km = 0.0;
  IntervalIndex interval;
};

struct MatchResult {
  std::vector<MatchedPoint> matched;
  std::size_t unmatched = 0;

  double match_rate() const;
};

/// Labels every record with its nearest road within `max_dist_km`.
MatchResult match_batch(std::vector<TraceRecord> records, const RoadNetwork& net,
                        double max_dist_km, std::int64_t tz_offset_s);

}  // namespace carhail
