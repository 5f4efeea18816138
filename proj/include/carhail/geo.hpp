#pragma once

#include <numbers>

namespace carhail {

/// Sphere radius used for every great-circle distance, in kilometers.
inline constexpr double kEarthRadiusKm = 6378.137;

inline constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Kilometers spanned by one degree of arc on the sphere.
inline constexpr double kKmPerDegree = kEarthRadiusKm * std::numbers::pi / 180.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const LatLon&, const LatLon&) = default;
};

inline bool in_geographic_range(const LatLon& p) {
  return p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

/// Haversine great-circle distance in kilometers.
double haversine_km(const LatLon& a, const LatLon& b);

}  // namespace carhail
