#include "carhail/geo.hpp"

#include <algorithm>
#include <cmath>

namespace carhail {

double haversine_km(const LatLon& a, const LatLon& b) {
  const double phi_a = deg_to_rad(a.lat);
  const double phi_b = deg_to_rad(b.lat);
  const double half_dphi = std::sin((phi_b - phi_a) / 2.0);
  const double half_dlambda = std::sin(deg_to_rad(b.lon - a.lon) / 2.0);
  const double h =
      half_dphi * half_dphi + std::cos(phi_a) * std::cos(phi_b) * half_dlambda * half_dlambda;
  // Rounding can push h marginally above 1 for antipodal points.
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

}  // namespace carhail
