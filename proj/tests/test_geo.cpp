#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "carhail/geo.hpp"

using namespace carhail;

namespace {

// Central angle from the cross and dot products of unit vectors, in long
// double. Shares nothing with the haversine formulation.
long double vector_arc_km(const LatLon& a, const LatLon& b) {
  const long double pi = std::numbers::pi_v<long double>;
  auto unit = [&](const LatLon& p) {
    const long double phi = p.lat * pi / 180.0L;
    const long double lam = p.lon * pi / 180.0L;
    return std::array<long double, 3>{std::cos(phi) * std::cos(lam),
                                      std::cos(phi) * std::sin(lam), std::sin(phi)};
  };
  const auto u = unit(a);
  const auto v = unit(b);
  const std::array<long double, 3> c{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                                     u[0] * v[1] - u[1] * v[0]};
  const long double cross = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]);
  const long double dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
  return 6378.137L * std::atan2(cross, dot);
}

}  // namespace

TEST(Haversine, IdenticalPointsAreZero) {
  EXPECT_EQ(haversine_km({30.65, 104.06}, {30.65, 104.06}), 0.0);
  EXPECT_EQ(haversine_km({-89.9, -179.9}, {-89.9, -179.9}), 0.0);
}

TEST(Haversine, PoleToEquatorIsQuarterCircle) {
  EXPECT_NEAR(haversine_km({90, 0}, {0, 0}), 10018.754, 0.001);
  EXPECT_NEAR(haversine_km({90, 0}, {0, 0}), std::numbers::pi * 6378.137 / 2, 1e-9);
}

TEST(Haversine, SmallMeridianArc) {
  EXPECT_NEAR(haversine_km({30.65, 104.06}, {30.66, 104.06}), 1.1132, 0.0005);
}

TEST(Haversine, AntipodesAreHalfCircle) {
  EXPECT_NEAR(haversine_km({0, 0}, {0, 180}), std::numbers::pi * 6378.137, 1e-9);
  EXPECT_NEAR(haversine_km({45, 10}, {-45, -170}), std::numbers::pi * 6378.137, 1e-6);
}

TEST(Haversine, Symmetric) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180);
  for (int i = 0; i < 200; ++i) {
    const LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)};
    EXPECT_DOUBLE_EQ(haversine_km(a, b), haversine_km(b, a));
  }
}

TEST(Haversine, MatchesVectorOracleOnRandomPairs) {
  std::mt19937_64 rng(20161001);
  std::uniform_real_distribution<double> lat(-90, 90), lon(-180, 180), near(-0.05, 0.05);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const LatLon a{lat(rng), lon(rng)};
    // Half the pairs are city-scale, where cancellation errors would show.
    const LatLon b = i % 2 == 0 ? LatLon{lat(rng), lon(rng)}
                                : LatLon{std::clamp(a.lat + near(rng), -90.0, 90.0),
                                         a.lon + near(rng)};
    const long double expected = vector_arc_km(a, b);
    if (expected == 0.0L) continue;
    const double rel =
        static_cast<double>(std::fabs((haversine_km(a, b) - expected) / expected));
    worst = std::max(worst, rel);
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Haversine, TriangleInequality) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-180, 180);
  for (int i = 0; i < 200; ++i) {
    const LatLon a{lat(rng), lon(rng)}, b{lat(rng), lon(rng)}, c{lat(rng), lon(rng)};
    EXPECT_LE(haversine_km(a, c), haversine_km(a, b) + haversine_km(b, c) + 1e-9);
  }
}
