#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "carhail/errors.hpp"
#include "carhail/road_network.hpp"
#include "test_support.hpp"

using namespace carhail;
using carhail::fixtures::make_segment;

namespace {

// Minimum Haversine distance from p to points spaced at most `step_km` apart
// along every piece of the polyline (great-circle interpolation).
double sampled_distance(const LatLon& p, const RoadSegment& seg, double step_km) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < seg.polyline.size(); ++i) {
    const LatLon a = seg.polyline[i];
    const LatLon b = seg.polyline[i + 1];
    const int n = std::max(1, static_cast<int>(std::ceil(haversine_km(a, b) / step_km)));
    for (int k = 0; k <= n; ++k) {
      const double t = static_cast<double>(k) / n;
      best = std::min(best, haversine_km(p, {a.lat + t * (b.lat - a.lat),
                                             a.lon + t * (b.lon - a.lon)}));
    }
  }
  return best;
}

std::string feature(const std::string& id, const std::string& coords,
                    const std::string& extra = "") {
  return R"({"type":"Feature","properties":{"id":)" + id + extra +
         R"(},"geometry":{"type":"LineString","coordinates":)" + coords + "}}";
}

std::string collection(const std::vector<std::string>& features) {
  std::string out = R"({"type":"FeatureCollection","features":[)";
  for (std::size_t i = 0; i < features.size(); ++i) out += (i ? "," : "") + features[i];
  return out + "]}";
}

RoadNetwork random_network(std::mt19937_64& rng, int n, double span_deg) {
  std::uniform_real_distribution<double> u(0.0, span_deg);
  std::uniform_int_distribution<int> nv(2, 5);
  std::vector<RoadSegment> segs;
  for (int i = 0; i < n; ++i) {
    std::vector<LatLon> line{{30.6 + u(rng), 104.0 + u(rng)}};
    const int count = nv(rng);
    for (int k = 1; k < count; ++k) {
      line.push_back({line.back().lat + (u(rng) - span_deg / 2) * 0.1,
                      line.back().lon + (u(rng) - span_deg / 2) * 0.1});
    }
    segs.push_back(make_segment(1000 - i * 3, line));  // ids deliberately out of order
  }
  return RoadNetwork(std::move(segs));
}

}  // namespace

TEST(RoadSegment, MeridianSegmentLength) {
  const auto seg = make_segment(1, {{30.65, 104.06}, {30.66, 104.06}});
  EXPECT_NEAR(seg.length_km, 1.1132, 0.00005);
  EXPECT_NEAR(seg.length_km, 0.01 * std::numbers::pi / 180 * 6378.137, 1e-9);
}

TEST(RoadSegment, LengthIsSumOfVertexDistances) {
  const std::vector<LatLon> line{{30.6, 104.0}, {30.61, 104.02}, {30.605, 104.03}};
  const double expected = haversine_km(line[0], line[1]) + haversine_km(line[1], line[2]);
  EXPECT_NEAR(polyline_length_km(line), expected, 1e-9 * expected);
}

TEST(LoadNetwork, ParsesFeaturesAndFreeFlow) {
  NetworkLoadStats stats;
  const auto net = parse_network(
      collection({feature("5", "[[104.0,30.6],[104.0,30.61]]", R"(,"free_flow_kmh":55)"),
                  feature("2", "[[104.0,30.6],[104.01,30.6],[104.01,30.61]]")}),
      {}, &stats);
  ASSERT_EQ(net.size(), 2u);
  EXPECT_EQ(net.segments()[0].id, 2);
  EXPECT_EQ(net.segment(5).free_flow_kmh, 55.0);
  EXPECT_FALSE(net.segment(2).free_flow_kmh.has_value());
  EXPECT_EQ(net.segment(2).polyline.size(), 3u);
  EXPECT_EQ(stats.loaded, 2u);
  EXPECT_TRUE(net.bbox().contains({30.605, 104.005}));
}

TEST(LoadNetwork, SingleVertexFeatureIsSkipped) {
  NetworkLoadStats stats;
  const auto net = parse_network(collection({feature("1", "[[104.0,30.6]]"),
                                             feature("2", "[[104.0,30.6],[104.0,30.6]]"),
                                             feature("3", "[[104.0,30.6],[104.0,30.7]]")}),
                                 {}, &stats);
  EXPECT_EQ(net.size(), 1u);
  EXPECT_EQ(stats.geometry_errors, 2u);
  EXPECT_EQ(stats.features, 3u);
}

TEST(LoadNetwork, DuplicateIdIsFatal) {
  EXPECT_THROW(parse_network(collection({feature("4", "[[104.0,30.6],[104.0,30.61]]"),
                                         feature("4", "[[104.1,30.6],[104.1,30.61]]")})),
               NetworkError);
}

TEST(LoadNetwork, BadAttributesAndFreeFlowAreCounted) {
  NetworkLoadStats stats;
  const auto net = parse_network(
      collection({feature(R"("x")", "[[104.0,30.6],[104.0,30.61]]"),
                  feature("1", "[[104.0,30.6],[104.0,30.61]]", R"(,"free_flow_kmh":120)"),
                  feature("2", "[[104.0,30.6],[104.0,30.61]]", R"(,"free_flow_kmh":0)"),
                  feature("3", "[[104.0,30.6],[104.0,30.61]]", R"(,"free_flow_kmh":70)")}),
      {}, &stats);
  EXPECT_EQ(stats.attribute_errors, 1u);
  EXPECT_EQ(stats.ignored_free_flow, 2u);
  EXPECT_EQ(net.size(), 3u);
  EXPECT_FALSE(net.segment(1).free_flow_kmh);
  EXPECT_EQ(net.segment(3).free_flow_kmh, 70.0);
}

TEST(LoadNetwork, UnreadableInputIsConfigError) {
  EXPECT_THROW(load_network("/nonexistent/network.geojson"), ConfigError);
  EXPECT_THROW(parse_network("{not json"), ConfigError);
  EXPECT_THROW(parse_network(R"({"type":"Feature"})"), ConfigError);
}

TEST(PointToSegment, PointOnVertexIsZero) {
  const auto seg = make_segment(1, {{30.6, 104.0}, {30.61, 104.0}, {30.61, 104.02}});
  for (const auto& v : seg.polyline) EXPECT_EQ(point_to_segment_distance(v, seg), 0.0);
}

TEST(PointToSegment, EastOfMeridianSegmentAtEquator) {
  const auto seg = make_segment(1, {{-0.01, 10.0}, {0.01, 10.0}});
  EXPECT_NEAR(point_to_segment_distance({0.0, 10.001}, seg), 0.1113, 0.00005);
  EXPECT_NEAR(point_to_segment_distance({0.0, 10.001}, seg),
              0.001 * std::numbers::pi / 180 * 6378.137, 1e-9);
}

TEST(PointToSegment, BeyondEndpointIsEndpointDistance) {
  const auto seg = make_segment(1, {{30.6, 104.0}, {30.61, 104.0}});
  const LatLon p{30.615, 104.003};
  EXPECT_DOUBLE_EQ(point_to_segment_distance(p, seg), haversine_km(p, seg.polyline[1]));
  EXPECT_NEAR(point_to_segment_distance(p, seg), sampled_distance(p, seg, 1e-4), 1e-7);
}

TEST(PointToSegment, AgreesWithDenseSamplingOracle) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int i = 0; i < 60; ++i) {
    const auto seg = make_segment(
        1, {{30.6 + u(rng), 104.0 + u(rng)}, {30.6 + u(rng), 104.0 + u(rng)},
            {30.6 + u(rng), 104.0 + u(rng)}});
    const LatLon p{30.6 + u(rng), 104.0 + u(rng)};
    const double got = point_to_segment_distance(p, seg);
    const double oracle = sampled_distance(p, seg, 1e-4);  // 0.1 m spacing
    // Sampling overestimates by at most half a step; the local planar foot is
    // accurate to well under 0.1% at city scale.
    EXPECT_LE(got, oracle + 1e-9);
    EXPECT_NEAR(got, oracle, 5e-5 + 1e-3 * oracle);
  }
}

TEST(PointToSegment, NeverExceedsVertexDistance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (int i = 0; i < 500; ++i) {
    std::vector<LatLon> line;
    for (int k = 0; k < 4; ++k) line.push_back({30.6 + u(rng), 104.0 + u(rng)});
    const auto seg = make_segment(1, line);
    const LatLon p{30.6 + u(rng), 104.0 + u(rng)};
    const auto proj = project_onto_segment(p, seg);
    EXPECT_EQ(proj.distance_km, point_to_segment_distance(p, seg));
    for (const auto& v : line) EXPECT_LE(proj.distance_km, haversine_km(p, v));
  }
}

TEST(NearestSegment, PicksCloseSegmentWithinGate) {
  // Segment 7 runs north-south; the others are about 200 m away.
  const double dlon_10m = 0.01 / (6378.137 * std::numbers::pi / 180 * std::cos(30.6 * std::numbers::pi / 180));
  const double dlat_200m = 0.2 / (6378.137 * std::numbers::pi / 180);
  RoadNetwork net({make_segment(7, {{30.60, 104.0}, {30.61, 104.0}}),
                   make_segment(3, {{30.605 + dlat_200m, 103.99}, {30.605 + dlat_200m, 104.01}}),
                   make_segment(9, {{30.605 - dlat_200m, 103.99}, {30.605 - dlat_200m, 104.01}})});
  const LatLon p{30.605, 104.0 + dlon_10m};
  const auto hit = net.nearest_segment(p, 0.05);
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->road_id, 7);
  EXPECT_NEAR(hit->distance_km, 0.01, 1e-5);
  EXPECT_EQ(hit, net.nearest_segment_linear(p, 0.05));
}

TEST(NearestSegment, NothingWithinGate) {
  const double dlat_100m = 0.1 / (6378.137 * std::numbers::pi / 180);
  RoadNetwork net({make_segment(1, {{30.6 + dlat_100m, 103.9}, {30.6 + dlat_100m, 104.1}}),
                   make_segment(2, {{30.6 - dlat_100m, 103.9}, {30.6 - dlat_100m, 104.1}})});
  EXPECT_FALSE(net.nearest_segment({30.6, 104.0}, 0.05));
  EXPECT_TRUE(net.nearest_segment({30.6, 104.0}, 0.11));
  EXPECT_TRUE(net.nearest_segment({30.6, 104.0}));
}

TEST(NearestSegment, TieGoesToLowerId) {
  // Two roads sharing an endpoint: a point on that node is at distance 0 from both.
  RoadNetwork net({make_segment(12, {{30.6, 104.0}, {30.6, 104.01}}),
                   make_segment(4, {{30.6, 104.0}, {30.61, 104.0}}),
                   make_segment(8, {{30.6, 104.0}, {30.59, 104.0}})});
  const auto hit = net.nearest_segment({30.6, 104.0}, 0.05);
  ASSERT_TRUE(hit);
  EXPECT_EQ(hit->road_id, 4);
  // Mirror-symmetric pair around the equator: exactly equal distances.
  RoadNetwork sym({make_segment(21, {{0.001, 10.0}, {0.001, 10.01}}),
                   make_segment(20, {{-0.001, 10.0}, {-0.001, 10.01}})});
  EXPECT_EQ(sym.nearest_segment({0.0, 10.005}, 1.0)->road_id, 20);
}

TEST(NearestSegment, EmptyNetwork) {
  RoadNetwork net;
  EXPECT_FALSE(net.nearest_segment({30.6, 104.0}, 0.05));
  EXPECT_FALSE(net.nearest_segment({30.6, 104.0}));
}

TEST(NearestSegment, IndexEqualsLinearScan) {
  std::mt19937_64 rng(2016);
  for (int trial = 0; trial < 8; ++trial) {
    const double span = trial % 2 ? 0.05 : 0.5;
    const auto net = random_network(rng, 50 + trial * 40, span);
    std::uniform_real_distribution<double> u(-0.1 * span, 1.1 * span);
    for (int q = 0; q < 400; ++q) {
      const LatLon p{30.6 + u(rng), 104.0 + u(rng)};
      for (double gate : {0.01, 0.05, 0.5, std::numeric_limits<double>::infinity()}) {
        const auto fast = net.nearest_segment(p, gate);
        const auto slow = net.nearest_segment_linear(p, gate);
        ASSERT_EQ(fast.has_value(), slow.has_value()) << "gate " << gate;
        if (fast) {
          EXPECT_EQ(fast->road_id, slow->road_id);
          EXPECT_EQ(fast->distance_km, slow->distance_km);
        }
      }
    }
  }
}

TEST(NearestSegment, FarQueriesFallBackCorrectly) {
  std::mt19937_64 rng(99);
  const auto net = random_network(rng, 30, 0.1);
  for (const LatLon p : {LatLon{-45.0, -70.0}, LatLon{89.9, 0.0}, LatLon{30.6, -76.0}}) {
    EXPECT_EQ(net.nearest_segment(p), net.nearest_segment_linear(p));
  }
}
