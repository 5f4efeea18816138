#include "carhail/road_network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <tuple>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <nlohmann/json.hpp>

#include "carhail/errors.hpp"

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace carhail {

namespace {

using point_t = bg::model::point<double, 2, bg::cs::cartesian>;  // (lon, lat)
using box_t = bg::model::box<point_t>;
using entry_t = std::pair<box_t, std::uint32_t>;

struct PieceProjection {
  LatLon foot;
  double distance_km;
};

PieceProjection project_piece(const LatLon& p, double cos_lat, const LatLon& a, const LatLon& b) {
  const double ax = (a.lon - p.lon) * cos_lat;
  const double ay = a.lat - p.lat;
  const double dx = (b.lon - a.lon) * cos_lat;
  const double dy = b.lat - a.lat;
  const double len2 = dx * dx + dy * dy;
  const double t = len2 > 0.0 ? std::clamp(-(ax * dx + ay * dy) / len2, 0.0, 1.0) : 0.0;

  PieceProjection best{{a.lat + t * (b.lat - a.lat), a.lon + t * (b.lon - a.lon)}, 0.0};
  best.distance_km = haversine_km(p, best.foot);
  for (const LatLon& v : {a, b}) {
    const double d = haversine_km(p, v);
    if (d < best.distance_km) best = {v, d};
  }
  return best;
}

bool better(const SegmentHit& candidate, const std::optional<SegmentHit>& current) {
  return !current || std::tie(candidate.distance_km, candidate.road_id) <
                         std::tie(current->distance_km, current->road_id);
}

}  // namespace

double polyline_length_km(std::span<const LatLon> polyline) {
  double total = 0.0;
  for (std::size_t i = 1; i < polyline.size(); ++i) {
    total += haversine_km(polyline[i - 1], polyline[i]);
  }
  return total;
}

void BoundingBox::extend(const LatLon& p) {
  min_lat = std::min(min_lat, p.lat);
  min_lon = std::min(min_lon, p.lon);
  max_lat = std::max(max_lat, p.lat);
  max_lon = std::max(max_lon, p.lon);
}

bool BoundingBox::contains(const LatLon& p) const {
  return p.lat >= min_lat && p.lat <= max_lat && p.lon >= min_lon && p.lon <= max_lon;
}

SegmentProjection project_onto_segment(const LatLon& p, const RoadSegment& seg) {
  const double cos_lat = std::cos(deg_to_rad(p.lat));
  SegmentProjection best{seg.polyline.front(), std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i + 1 < seg.polyline.size(); ++i) {
    const auto piece = project_piece(p, cos_lat, seg.polyline[i], seg.polyline[i + 1]);
    if (piece.distance_km < best.distance_km) best = {piece.foot, piece.distance_km, i};
  }
  return best;
}

double point_to_segment_distance(const LatLon& p, const RoadSegment& seg) {
  return project_onto_segment(p, seg).distance_km;
}

// ---------------------------------------------------------------------------

struct RoadNetwork::Index {
  struct Piece {
    std::uint32_t segment;
    std::uint32_t vertex;
  };
  std::vector<Piece> pieces;
  bgi::rtree<entry_t, bgi::rstar<16>> tree;
};

RoadNetwork::RoadNetwork() : index_(std::make_unique<Index>()) {}
RoadNetwork::~RoadNetwork() = default;
RoadNetwork::RoadNetwork(RoadNetwork&&) noexcept = default;
RoadNetwork& RoadNetwork::operator=(RoadNetwork&&) noexcept = default;

RoadNetwork::RoadNetwork(std::vector<RoadSegment> segments)
    : segments_(std::move(segments)), index_(std::make_unique<Index>()) {
  std::sort(segments_.begin(), segments_.end(),
            [](const RoadSegment& a, const RoadSegment& b) { return a.id < b.id; });
  std::vector<entry_t> entries;
  for (std::size_t s = 0; s < segments_.size(); ++s) {
    const RoadSegment& seg = segments_[s];
    if (!by_id_.emplace(seg.id, s).second) {
      throw NetworkError("duplicate road id " + std::to_string(seg.id));
    }
    if (seg.polyline.size() < 2 || !(seg.length_km > 0.0)) {
      throw NetworkError("road " + std::to_string(seg.id) + " has degenerate geometry");
    }
    for (std::size_t v = 0; v < seg.polyline.size(); ++v) {
      bbox_.extend(seg.polyline[v]);
      if (v + 1 == seg.polyline.size()) break;
      const LatLon& a = seg.polyline[v];
      const LatLon& b = seg.polyline[v + 1];
      const box_t box{point_t{std::min(a.lon, b.lon), std::min(a.lat, b.lat)},
                      point_t{std::max(a.lon, b.lon), std::max(a.lat, b.lat)}};
      entries.emplace_back(box, static_cast<std::uint32_t>(index_->pieces.size()));
      index_->pieces.push_back({static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(v)});
    }
  }
  // Range construction uses STR bulk loading.
  index_->tree = decltype(index_->tree)(entries.begin(), entries.end());
}

std::optional<std::size_t> RoadNetwork::index_of(RoadId id) const {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

const RoadSegment& RoadNetwork::segment(RoadId id) const {
  const auto idx = index_of(id);
  if (!idx) throw NetworkError("unknown road id " + std::to_string(id));
  return segments_[*idx];
}

std::optional<SegmentHit> RoadNetwork::query_radius(const LatLon& p, double radius_km) const {
  // Conservative degree half-widths: any point within radius_km of p by
  // Haversine lies inside this box.
  const double angular = radius_km / kEarthRadiusKm;
  constexpr double kSlack = 1.0 + 1e-9;
  double lat_half = 180.0;
  double lon_half = 360.0;
  if (angular < std::numbers::pi) {
    lat_half = rad_to_deg(angular) * kSlack + 1e-12;
    const double phi = std::abs(deg_to_rad(p.lat));
    const double phi_far = std::min(std::numbers::pi / 2.0, phi + angular);
    const double cos_prod = std::cos(phi) * std::cos(phi_far);
    if (cos_prod > 1e-12) {
      const double s = std::sin(angular / 2.0) / std::sqrt(cos_prod);
      if (s < 1.0) lon_half = rad_to_deg(2.0 * std::asin(s)) * kSlack + 1e-12;
    }
  }
  const box_t query{point_t{p.lon - lon_half, p.lat - lat_half},
                    point_t{p.lon + lon_half, p.lat + lat_half}};

  const double cos_lat = std::cos(deg_to_rad(p.lat));
  std::optional<SegmentHit> best;
  for (auto it = index_->tree.qbegin(bgi::intersects(query)); it != index_->tree.qend(); ++it) {
    const auto& piece = index_->pieces[it->second];
    const RoadSegment& seg = segments_[piece.segment];
    const auto proj =
        project_piece(p, cos_lat, seg.polyline[piece.vertex], seg.polyline[piece.vertex + 1]);
    if (proj.distance_km > radius_km) continue;
    const SegmentHit hit{seg.id, proj.distance_km};
    if (better(hit, best)) best = hit;
  }
  return best;
}

std::optional<SegmentHit> RoadNetwork::nearest_segment(const LatLon& p, double max_dist_km) const {
  if (segments_.empty() || !(max_dist_km >= 0.0)) return std::nullopt;
  if (std::isfinite(max_dist_km)) return query_radius(p, max_dist_km);
  // Ungated: widen the search until a hit lies inside the searched radius;
  // anything closer would have been inside the same box.
  const double whole_sphere = std::numbers::pi * kEarthRadiusKm;
  for (double radius = 0.1;; radius *= 4.0) {
    if (radius >= whole_sphere) return nearest_segment_linear(p, max_dist_km);
    if (auto hit = query_radius(p, radius)) return hit;
  }
}

std::optional<SegmentHit> RoadNetwork::nearest_segment_linear(const LatLon& p,
                                                              double max_dist_km) const {
  std::optional<SegmentHit> best;
  for (const RoadSegment& seg : segments_) {
    const SegmentHit hit{seg.id, point_to_segment_distance(p, seg)};
    if (hit.distance_km <= max_dist_km && better(hit, best)) best = hit;
  }
  return best;
}

// ---------------------------------------------------------------------------

RoadNetwork parse_network(std::string_view geojson, NetworkLoadOptions options,
                          NetworkLoadStats* stats_out) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(geojson);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network document is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("features") || !doc["features"].is_array()) {
    throw ConfigError("network document must be a FeatureCollection");
  }

  NetworkLoadStats stats;
  std::vector<RoadSegment> segments;
  std::unordered_map<RoadId, bool> seen;
  for (const auto& feature : doc["features"]) {
    ++stats.features;
    const auto* props = feature.contains("properties") && feature["properties"].is_object()
                            ? &feature["properties"]
                            : nullptr;
    if (props == nullptr || !props->contains("id") || !(*props)["id"].is_number_integer()) {
      ++stats.attribute_errors;
      continue;
    }
    RoadSegment seg;
    seg.id = (*props)["id"].get<RoadId>();
    if (!seen.emplace(seg.id, true).second) {
      throw NetworkError("duplicate road id " + std::to_string(seg.id) + " in network document");
    }

    bool geometry_ok = feature.contains("geometry") && feature["geometry"].is_object() &&
                       feature["geometry"].value("type", "") == "LineString" &&
                       feature["geometry"].contains("coordinates") &&
                       feature["geometry"]["coordinates"].is_array();
    if (geometry_ok) {
      for (const auto& c : feature["geometry"]["coordinates"]) {
        if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
          geometry_ok = false;
          break;
        }
        const LatLon v{c[1].get<double>(), c[0].get<double>()};
        if (!in_geographic_range(v)) {
          geometry_ok = false;
          break;
        }
        seg.polyline.push_back(v);
      }
    }
    if (geometry_ok) seg.length_km = polyline_length_km(seg.polyline);
    if (!geometry_ok || seg.polyline.size() < 2 || !(seg.length_km > 0.0)) {
      ++stats.geometry_errors;
      continue;
    }

    if (props->contains("free_flow_kmh") && !(*props)["free_flow_kmh"].is_null()) {
      const auto& ff = (*props)["free_flow_kmh"];
      if (ff.is_number() && ff.get<double>() > 0.0 && ff.get<double>() <= options.anomaly_kmh) {
        seg.free_flow_kmh = ff.get<double>();
      } else {
        ++stats.ignored_free_flow;
      }
    }
    segments.push_back(std::move(seg));
  }
  stats.loaded = segments.size();
  if (stats_out != nullptr) *stats_out = stats;
  return RoadNetwork(std::move(segments));
}

RoadNetwork load_network(const std::filesystem::path& path, NetworkLoadOptions options,
                         NetworkLoadStats* stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open network file: " + path.string());
  std::ostringstream content;
  content << in.rdbuf();
  return parse_network(content.str(), options, stats);
}

}  // namespace carhail
