#include <gtest/gtest.h>

#include <random>

#include "carhail/errors.hpp"
#include "carhail/map_matching.hpp"
#include "carhail/synthetic.hpp"
#include "test_support.hpp"

using namespace carhail;
using carhail::fixtures::make_segment;

namespace {

std::vector<TraceRecord> read_all(const std::string& csv) {
  ChunkReader reader(make_string_source(csv), {{}, 1'000'000, 0.0, true});
  std::vector<TraceRecord> out;
  for (auto& b : read_chunks(reader)) out.insert(out.end(), b.begin(), b.end());
  return out;
}

struct ShiftedCity {
  RoadNetwork net;
  std::vector<TraceRecord> records;
};

ShiftedCity shifted_city(double dlat, double dlon, std::uint64_t seed = 1) {
  synth::Scenario sc;
  sc.seed = seed;
  sc.injected_offset = {dlat, dlon};
  const auto data = synth::generate(sc);
  return {parse_network(data.network_geojson), read_all(data.traces_csv)};
}

}  // namespace

TEST(ApplyOffset, AddsComponents) {
  const auto out = apply_offset({{"d", "o", 1, 30.65, 104.06}}, {0.001, -0.001});
  ASSERT_EQ(out.records.size(), 1u);
  EXPECT_NEAR(out.records[0].lat, 30.651, 1e-12);
  EXPECT_NEAR(out.records[0].lon, 104.059, 1e-12);
  EXPECT_EQ(out.skipped, 0u);
}

TEST(ApplyOffset, ZeroOffsetIsIdentity) {
  const std::vector<TraceRecord> batch{{"d", "o", 1, 30.65, 104.06}, {"e", "p", 2, -10.5, 3.25}};
  EXPECT_EQ(apply_offset(batch, {}).records, batch);
}

TEST(ApplyOffset, OutOfRangeIsSkipped) {
  const auto out = apply_offset({{"d", "o", 1, 89.9991, 0.0}, {"d", "o", 2, 30.0, 104.0}},
                                {0.001, 0.0});
  EXPECT_EQ(out.skipped, 1u);
  ASSERT_EQ(out.records.size(), 1u);
  EXPECT_EQ(out.records[0].timestamp, 2);
}

TEST(ApplyOffset, Invertible) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-170, 170), off(-0.01, 0.01);
  std::vector<TraceRecord> batch;
  for (int i = 0; i < 500; ++i) batch.push_back({"d", "o", i + 1, lat(rng), lon(rng)});
  for (int k = 0; k < 10; ++k) {
    const OffsetVector v{off(rng), off(rng)};
    const auto back = apply_offset(apply_offset(batch, v).records, -v).records;
    ASSERT_EQ(back.size(), batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      EXPECT_NEAR(back[i].lat, batch[i].lat, 1e-12);
      EXPECT_NEAR(back[i].lon, batch[i].lon, 1e-12);
    }
  }
}

TEST(OffsetVector, Cap) {
  EXPECT_TRUE((OffsetVector{0.01, -0.01}.within_cap()));
  EXPECT_FALSE((OffsetVector{0.0101, 0.0}.within_cap()));
  EXPECT_FALSE((OffsetVector{0.0, -0.05}.within_cap()));
}

TEST(EstimateOffset, RecoversInjectedShift) {
  const auto city = shifted_city(0.002, -0.002);
  const auto est = estimate_offset(city.records, city.net);
  EXPECT_TRUE(est.converged);
  EXPECT_NEAR(est.offset.dlat, -0.002, 0.0002);
  EXPECT_NEAR(est.offset.dlon, 0.002, 0.0002);
}

TEST(EstimateOffset, AllSignCombinations) {
  for (const double a : {0.002, -0.002}) {
    for (const double b : {0.002, -0.002}) {
      const auto city = shifted_city(a, b, 3);
      const auto est = estimate_offset(city.records, city.net);
      EXPECT_NEAR(est.offset.dlat, -a, 0.1 * std::abs(a)) << a << "," << b;
      EXPECT_NEAR(est.offset.dlon, -b, 0.1 * std::abs(b)) << a << "," << b;
    }
  }
}

TEST(EstimateOffset, OnRoadTracesGiveZero) {
  const auto city = shifted_city(0.0, 0.0);
  const auto est = estimate_offset(city.records, city.net);
  EXPECT_NEAR(est.offset.dlat, 0.0, 1e-7);
  EXPECT_NEAR(est.offset.dlon, 0.0, 1e-7);
}

TEST(EstimateOffset, ToleratesOffRoadOutliers) {
  auto city = shifted_city(-0.0015, 0.001);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 0.07);
  for (std::size_t i = 0; i < city.records.size(); i += 10) {  // 10% random junk
    city.records[i].lat = 30.6 + u(rng);
    city.records[i].lon = 104.0 + u(rng);
  }
  const auto est = estimate_offset(city.records, city.net);
  EXPECT_NEAR(est.offset.dlat, 0.0015, 0.00015);
  EXPECT_NEAR(est.offset.dlon, -0.001, 0.0001);
}

TEST(EstimateOffset, SampleTooSmall) {
  const auto city = shifted_city(0.001, 0.001);
  const std::vector<TraceRecord> few(city.records.begin(), city.records.begin() + 999);
  EXPECT_THROW(estimate_offset(few, city.net), DataQualityError);
  EXPECT_NO_THROW(estimate_offset(few, city.net, {.min_sample = 999}));
}

TEST(EstimateOffset, RejectsShiftBeyondCap) {
  // Points on a copy of the east-west road moved 0.05 degrees north; the
  // north-south road is too far away to matter.
  RoadNetwork net({make_segment(1, {{30.6, 104.0}, {30.6, 104.3}}),
                   make_segment(2, {{30.6, 104.0}, {30.8, 104.0}})});
  std::vector<TraceRecord> sample;
  for (int i = 0; i < 200; ++i) sample.push_back({"d", "o", i + 1, 30.65, 104.1 + i * 0.0005});
  EXPECT_THROW(estimate_offset(sample, net, {.min_sample = 100}), DataQualityError);
}

TEST(MatchBatch, LabelsNearestRoadAndInterval) {
  RoadNetwork net({make_segment(1, {{30.6, 104.0}, {30.6, 104.01}}),
                   make_segment(2, {{30.6, 104.01}, {30.61, 104.01}})});
  const std::int64_t t = carhail::fixtures::kLocalMidnight + 8 * 3600;
  const auto result = match_batch({{"d", "o", t, 30.6, 104.005},
                                   {"d", "o", t + 3, 30.605, 104.01},
                                   {"d", "o", t + 6, 30.65, 104.05}},
                                  net, 0.05, kDefaultTzOffsetSeconds);
  ASSERT_EQ(result.matched.size(), 2u);
  EXPECT_EQ(result.unmatched, 1u);
  EXPECT_EQ(result.matched[0].road_id, 1);
  EXPECT_EQ(result.matched[1].road_id, 2);
  EXPECT_EQ(result.matched[0].interval.slot, 32);
  EXPECT_LE(result.matched[0].match_dist_km, 1e-9);
  EXPECT_NEAR(result.match_rate(), 2.0 / 3.0, 1e-12);
}

TEST(MatchBatch, EmptyBatch) {
  RoadNetwork net({make_segment(1, {{30.6, 104.0}, {30.6, 104.01}})});
  const auto result = match_batch({}, net, 0.05, 0);
  EXPECT_TRUE(result.matched.empty());
  EXPECT_EQ(result.unmatched, 0u);
}

TEST(MatchBatch, DistanceNeverExceedsGate) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 0.08);
  const auto city = shifted_city(0, 0);
  std::vector<TraceRecord> pts;
  for (int i = 0; i < 2000; ++i) pts.push_back({"d", "o", i + 1, 30.6 + u(rng), 104.0 + u(rng)});
  for (double gate : {0.01, 0.05, 0.2}) {
    const auto result = match_batch(pts, city.net, gate, 0);
    for (const auto& m : result.matched) EXPECT_LE(m.match_dist_km, gate);
    EXPECT_EQ(result.matched.size() + result.unmatched, pts.size());
  }
}

TEST(MatchBatch, CorrectedNoiselessTracesAllMatch) {
  const auto city = shifted_city(0.002, -0.002);
  const auto est = estimate_offset(city.records, city.net);
  const auto corrected = apply_offset(city.records, est.offset);
  const auto result = match_batch(corrected.records, city.net, 0.05, kDefaultTzOffsetSeconds);
  EXPECT_EQ(result.unmatched, 0u);
  for (const auto& m : result.matched) EXPECT_LE(m.match_dist_km, 0.001);
  // Without correction a 0.002 degree shift (about 200 m) leaves most points unmatched.
  EXPECT_GT(match_batch(city.records, city.net, 0.05, 0).unmatched, city.records.size() / 2);
}
