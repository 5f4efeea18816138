#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "carhail/geo.hpp"

namespace carhail {

using RoadId = std::int64_t;

struct RoadSegment {
  RoadId id = 0;
  std::vector<LatLon> polyline;  // >= 2 vertices
  double length_km = 0.0;        // Haversine sum over consecutive vertices
  std::optional<double> free_flow_kmh;
};

/// Sum of Haversine distances between consecutive vertices.
double polyline_length_km(std::span<const LatLon> polyline);

struct BoundingBox {
  double min_lat = std::numeric_limits<double>::infinity();
  double min_lon = std::numeric_limits<double>::infinity();
  double max_lat = -std::numeric_limits<double>::infinity();
  double max_lon = -std::numeric_limits<double>::infinity();

  void extend(const LatLon& p);
  bool contains(const LatLon& p) const;
};

/// Closest point of a polyline to a query point.
struct SegmentProjection {
  LatLon foot;
  double distance_km = 0.0;
  std::size_t sub_segment = 0;  // index of the first vertex of the closest piece
};

/// Closest point on `seg` to `p`. Each piece is projected in a local
/// equirectangular plane centred at `p`; the foot of the perpendicular and
/// both piece endpoints are then measured with Haversine and the smallest is
/// kept, so the result never exceeds the distance to any vertex.
SegmentProjection project_onto_segment(const LatLon& p, const RoadSegment& seg);

double point_to_segment_distance(const LatLon& p, const RoadSegment& seg);

struct SegmentHit {
  RoadId road_id = 0;
  double distance_km = 0.0;

  friend bool operator==(const SegmentHit&, const SegmentHit&) = default;
};

struct NetworkLoadStats {
  std::size_t features = 0;
  std::size_t loaded = 0;
  std::size_t geometry_errors = 0;   // < 2 vertices, zero length, bad coordinates
  std::size_t attribute_errors = 0;  // missing or non-integer id
  std::size_t ignored_free_flow = 0;  // attribute present but outside (0, anomaly limit]
};

struct NetworkLoadOptions {
  double anomaly_kmh = 70.0;
};

/// Immutable road network with an R-tree over polyline pieces. Segments are
/// kept sorted by id; all queries are safe to run concurrently.
class RoadNetwork {
 public:
  RoadNetwork();
  /// Throws NetworkError on duplicate ids or invalid segments.
  explicit RoadNetwork(std::vector<RoadSegment> segments);
  ~RoadNetwork();
  RoadNetwork(RoadNetwork&&) noexcept;
  RoadNetwork& operator=(RoadNetwork&&) noexcept;

  std::span<const RoadSegment> segments() const { return segments_; }
  std::size_t size() const { return segments_.size(); }
  bool empty() const { return segments_.empty(); }
  const BoundingBox& bbox() const { return bbox_; }

  /// Position of `id` in `segments()`, if present.
  std::optional<std::size_t> index_of(RoadId id) const;
  const RoadSegment& segment(RoadId id) const;

  /// Segment nearest to `p` if within `max_dist_km` (ties: lowest id).
  /// Pass infinity for an ungated search.
  std::optional<SegmentHit> nearest_segment(
      const LatLon& p, double max_dist_km = std::numeric_limits<double>::infinity()) const;

  /// Exhaustive scan with the same contract as nearest_segment.
  std::optional<SegmentHit> nearest_segment_linear(
      const LatLon& p, double max_dist_km = std::numeric_limits<double>::infinity()) const;

 private:
  struct Index;

  std::optional<SegmentHit> query_radius(const LatLon& p, double radius_km) const;

  std::vector<RoadSegment> segments_;
  std::unordered_map<RoadId, std::size_t> by_id_;
  BoundingBox bbox_;
  std::unique_ptr<Index> index_;
};

/// Reads a GeoJSON FeatureCollection of LineString features with properties
/// {id: integer, free_flow_kmh?: number}. Features with fewer than two
/// vertices (or zero length / out-of-range coordinates) are skipped and
/// counted; a repeated id throws NetworkError; a missing or unparsable file
/// throws ConfigError.
RoadNetwork load_network(const std::filesystem::path& path, NetworkLoadOptions options = {},
                         NetworkLoadStats* stats = nullptr);
RoadNetwork parse_network(std::string_view geojson, NetworkLoadOptions options = {},
                          NetworkLoadStats* stats = nullptr);

}  // namespace carhail
