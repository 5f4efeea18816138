#include <gtest/gtest.h>

#include <zlib.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "carhail/errors.hpp"
#include "carhail/trace_ingest.hpp"
#include "test_support.hpp"

using namespace carhail;
using namespace std::chrono;

namespace {

std::string valid_rows(int n, int start = 0) {
  std::ostringstream out;
  for (int i = start; i < start + n; ++i) {
    out << "d" << i % 17 << ",o" << i / 5 << "," << 1475280000 + i << ",104.06,30.65\n";
  }
  return out.str();
}

std::vector<std::size_t> batch_sizes(std::string content, std::size_t chunk) {
  ChunkReader reader(make_string_source(std::move(content)), {{}, chunk, 1.0, true});
  std::vector<std::size_t> sizes;
  for (const auto& b : read_chunks(reader)) sizes.push_back(b.size());
  return sizes;
}

}  // namespace

TEST(ParseRecord, MapsFieldsInDefaultOrder) {
  const auto result = parse_record("d1,o1,1475280000,104.06,30.65");
  ASSERT_TRUE(std::holds_alternative<TraceRecord>(result));
  const auto& rec = std::get<TraceRecord>(result);
  EXPECT_EQ(rec, (TraceRecord{"d1", "o1", 1475280000, 30.65, 104.06}));
}

TEST(ParseRecord, MalformedTimestampIsParseError) {
  const auto result = parse_record("d1,o1,notatime,104.06,30.65");
  ASSERT_TRUE(std::holds_alternative<RecordError>(result));
  EXPECT_EQ(std::get<RecordError>(result).kind, RecordError::Kind::parse);
}

TEST(ParseRecord, LatitudeOutOfRangeIsValidationError) {
  const auto result = parse_record("d1,o1,1475280000,104.06,95.0");
  ASSERT_TRUE(std::holds_alternative<RecordError>(result));
  EXPECT_EQ(std::get<RecordError>(result).kind, RecordError::Kind::validation);
}

TEST(ParseRecord, OtherRejections) {
  auto kind = [](std::string_view line) {
    const auto r = parse_record(line);
    return std::holds_alternative<RecordError>(r)
               ? std::optional(std::get<RecordError>(r).kind)
               : std::nullopt;
  };
  EXPECT_EQ(kind("d1,o1,1475280000,104.06"), RecordError::Kind::parse);
  EXPECT_EQ(kind("d1,o1,1475280000,104.06,30.65,7"), RecordError::Kind::parse);
  EXPECT_EQ(kind("d1,o1,1475280000,abc,30.65"), RecordError::Kind::parse);
  EXPECT_EQ(kind("d1,o1,1475280000.5,104.06,30.65"), RecordError::Kind::parse);
  EXPECT_EQ(kind(",o1,1475280000,104.06,30.65"), RecordError::Kind::validation);
  EXPECT_EQ(kind("d1,,1475280000,104.06,30.65"), RecordError::Kind::validation);
  EXPECT_EQ(kind("d1,o1,0,104.06,30.65"), RecordError::Kind::validation);
  EXPECT_EQ(kind("d1,o1,1475280000,180.5,30.65"), RecordError::Kind::validation);
  EXPECT_EQ(kind("d1,o1,1475280000,104.06,30.65"), std::nullopt);
}

TEST(ParseRecord, ConfigurableLayoutAndDelimiter) {
  const auto layout = ColumnLayout::from_names("timestamp,lat,lon,order_id,driver_id", '\t');
  const auto result = parse_record("1475280000\t30.65\t104.06\to9\td3", layout);
  ASSERT_TRUE(std::holds_alternative<TraceRecord>(result));
  EXPECT_EQ(std::get<TraceRecord>(result), (TraceRecord{"d3", "o9", 1475280000, 30.65, 104.06}));
  EXPECT_THROW(ColumnLayout::from_names("timestamp,lat,lon,order_id"), ConfigError);
  EXPECT_THROW(ColumnLayout::from_names("timestamp,lat,lat,order_id,driver_id"), ConfigError);
  EXPECT_THROW(ColumnLayout::from_names("timestamp,lat,lon,order_id,speed"), ConfigError);
}

TEST(ReadChunks, SplitsIntoFullBatchesAndRemainder) {
  EXPECT_EQ(batch_sizes(valid_rows(25'000), 10'000),
            (std::vector<std::size_t>{10'000, 10'000, 5'000}));
}

TEST(ReadChunks, EmptyInputYieldsNoBatches) {
  EXPECT_TRUE(batch_sizes("", 10'000).empty());
  EXPECT_TRUE(batch_sizes("driver_id,order_id,timestamp,lon,lat\n", 10'000).empty());
  EXPECT_TRUE(batch_sizes("\n\n\r\n", 3).empty());
}

TEST(ReadChunks, HeaderDetectedOnlyOnFirstRow) {
  ChunkReader reader(make_string_source("driver_id,order_id,timestamp,lon,lat\r\n" +
                                        valid_rows(3) +
                                        "driver_id,order_id,timestamp,lon,lat\n"),
                     {{}, 10, 1.0, true});
  const auto batches = read_chunks(reader);
  EXPECT_EQ(reader.stats().header_rows, 1u);
  EXPECT_EQ(reader.stats().parsed, 3u);
  EXPECT_EQ(reader.stats().parse_errors, 1u);  // the repeated header is data
}

TEST(ReadChunks, LastLineWithoutNewline) {
  auto content = valid_rows(4);
  content.pop_back();
  ChunkReader reader(make_string_source(content), {{}, 3, 0.0, true});
  const auto batches = read_chunks(reader);
  ASSERT_EQ(batches.size(), 2u);
  EXPECT_EQ(batches[1].back().timestamp, 1475280003);
}

TEST(ReadChunks, ErrorRateCeilingAborts) {
  std::string content = valid_rows(98) + "x,y,z\nx,y,z\n";
  ChunkReader lenient(make_string_source(content), {{}, 1000, 0.02, true});
  EXPECT_NO_THROW(read_chunks(lenient));
  ChunkReader strict(make_string_source(content), {{}, 1000, 0.01, true});
  EXPECT_THROW(read_chunks(strict), DataQualityError);
}

TEST(ReadChunks, WrongLayoutAbortsEarly) {
  // Semicolon-separated file read as CSV: every row fails; the first check
  // happens after 10,000 rows, long before the end of the file.
  std::string content;
  for (int i = 0; i < 30'000; ++i) content += "d;o;1475280000;104.06;30.65\n";
  ChunkReader reader(make_string_source(content), {{}, 10'000, 0.01, true});
  EXPECT_THROW(reader.next(), DataQualityError);
  EXPECT_EQ(reader.stats().rows, 10'000u);
}

TEST(ReadChunks, MissingFileIsConfigError) {
  EXPECT_THROW(ChunkReader("/nonexistent/traces.csv", IngestConfig{}), ConfigError);
  EXPECT_THROW(ChunkReader(make_string_source(""), IngestConfig{{}, 0, 0.01, true}), ConfigError);
}

TEST(ReadChunks, GzipInputIsTransparent) {
  const auto dir = fixtures::scratch_dir("gz");
  const std::string content = "driver_id,order_id,timestamp,lon,lat\n" + valid_rows(1234);
  gzFile gz = gzopen((dir / "t.csv.gz").c_str(), "wb");
  gzwrite(gz, content.data(), static_cast<unsigned>(content.size()));
  gzclose(gz);
  ChunkReader plain(make_string_source(content), {{}, 100, 0.0, true});
  ChunkReader packed(dir / "t.csv.gz", {{}, 100, 0.0, true});
  EXPECT_EQ(read_chunks(plain), read_chunks(packed));
}

TEST(ReadChunks, RecordCountConservationOnDirtyInput) {
  std::mt19937 rng(11);
  const std::vector<std::string> bad = {"garbage", "d,o,abc,1,1", "d,o,1,1,95", ",o,5,1,1",
                                        "a,b,c,d,e,f", "d,o,-3,1,1"};
  for (int trial = 0; trial < 20; ++trial) {
    std::ostringstream out;
    const int rows = 50 + static_cast<int>(rng() % 500);
    for (int i = 0; i < rows; ++i) {
      if (rng() % 4 == 0) {
        out << bad[rng() % bad.size()] << "\n";
      } else {
        out << "d,o" << i << "," << 1475280000 + i << ",104,30\n";
      }
    }
    ChunkReader reader(make_string_source(out.str()), {{}, 1 + rng() % 50, 1.0, false});
    std::size_t total = 0;
    for (const auto& b : read_chunks(reader)) total += b.size();
    const auto& s = reader.stats();
    EXPECT_EQ(s.rows, static_cast<std::uint64_t>(rows));
    EXPECT_EQ(s.parsed + s.skipped(), s.rows);
    EXPECT_EQ(total, s.parsed);
  }
}

TEST(ReadChunks, ChunkingIsContentInvariant) {
  const std::string content = valid_rows(5'000) + "bad row\n" + valid_rows(1'000, 9'000);
  ChunkReader whole(make_string_source(content), {{}, 1'000'000, 1.0, true});
  const auto reference = read_chunks(whole).at(0);
  for (std::size_t chunk : {1u, 2u, 7u, 333u, 4'999u, 6'000u}) {
    ChunkReader reader(make_string_source(content), {{}, chunk, 1.0, true});
    std::vector<TraceRecord> all;
    for (auto& b : read_chunks(reader)) {
      EXPECT_LE(b.size(), chunk);
      all.insert(all.end(), b.begin(), b.end());
    }
    EXPECT_EQ(all, reference) << "chunk " << chunk;
  }
}

TEST(AssignInterval, SlotBoundaries) {
  const std::int64_t midnight = fixtures::kLocalMidnight;
  const sys_days day{year{2016} / 10 / 1};
  EXPECT_EQ(assign_interval(midnight, kDefaultTzOffsetSeconds), (IntervalIndex{day, 0}));
  EXPECT_EQ(assign_interval(midnight + 8 * 3600, kDefaultTzOffsetSeconds).slot, 32);
  EXPECT_EQ(assign_interval(midnight + 86'399, kDefaultTzOffsetSeconds), (IntervalIndex{day, 95}));
  EXPECT_EQ(assign_interval(midnight + 86'400, kDefaultTzOffsetSeconds),
            (IntervalIndex{day + days{1}, 0}));
  EXPECT_EQ(assign_interval(midnight + 899, kDefaultTzOffsetSeconds).slot, 0);
  EXPECT_EQ(assign_interval(midnight + 900, kDefaultTzOffsetSeconds).slot, 1);
  EXPECT_EQ(assign_interval(midnight - 1, kDefaultTzOffsetSeconds),
            (IntervalIndex{day - days{1}, 95}));
}

TEST(AssignInterval, TimezoneShiftsDayAndSlot) {
  const sys_days day{year{2016} / 9 / 30};
  EXPECT_EQ(assign_interval(fixtures::kLocalMidnight, 0), (IntervalIndex{day, 64}));
  EXPECT_EQ(assign_interval(fixtures::kLocalMidnight, -5 * 3600), (IntervalIndex{day, 44}));
}

TEST(AssignInterval, MonotoneAndNinetySixSlotsPerDay) {
  std::set<int> slots;
  IntervalIndex prev = assign_interval(fixtures::kLocalMidnight, kDefaultTzOffsetSeconds);
  for (std::int64_t t = fixtures::kLocalMidnight; t < fixtures::kLocalMidnight + 86'400; t += 7) {
    const auto cur = assign_interval(t, kDefaultTzOffsetSeconds);
    EXPECT_LE(prev, cur);
    EXPECT_EQ(cur.day, prev.day);
    slots.insert(cur.slot);
    prev = cur;
  }
  EXPECT_EQ(slots.size(), 96u);
}

TEST(IntervalLabels, RoundTrip) {
  const sys_days day{year{2016} / 10 / 7};
  for (int slot = 0; slot < kSlotsPerDay; ++slot) {
    const IntervalIndex interval{day, slot};
    EXPECT_EQ(parse_interval_label(interval_label(interval)), interval);
  }
  EXPECT_EQ(interval_label({day, 34}), "2016-10-07T08:30");
  EXPECT_EQ(parse_interval_label("2016-10-07 08:30"), (IntervalIndex{day, 34}));
  EXPECT_EQ(parse_interval_label("2016-10-07T08:20"), std::nullopt);
  EXPECT_EQ(parse_interval_label("2016-13-07T08:30"), std::nullopt);
  EXPECT_EQ(parse_day("2016-02-30"), std::nullopt);
  EXPECT_EQ(day_intervals(day, 3).size(), 288u);
}
