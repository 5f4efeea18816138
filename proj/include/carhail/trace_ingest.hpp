#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "carhail/geo.hpp"

namespace carhail {

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct TraceRecord {
  std::string driver_id;
  std::string order_id;
  std::int64_t timestamp = 0;  // Unix seconds
  double lat = 0.0;
  double lon = 0.0;

  LatLon position() const { return {lat, lon}; }

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

enum class TraceField { driver_id, order_id, timestamp, lon, lat };

/// Column order and delimiter of a trace file.
struct ColumnLayout {
  std::array<TraceField, 5> order{TraceField::driver_id, TraceField::order_id,
                                  TraceField::timestamp, TraceField::lon, TraceField::lat};
  char delimiter = ',';

  /// Parses a comma-separated list of the five field names, e.g.
  /// "driver_id,order_id,timestamp,lat,lon". Throws ConfigError.
  static ColumnLayout from_names(std::string_view names, char delimiter = ',');
};

struct RecordError {
  enum class Kind { parse, validation };
  Kind kind;
  std::string message;
};

using ParseResult = std::variant<TraceRecord, RecordError>;

ParseResult parse_record(std::string_view line, const ColumnLayout& layout = {});

// ---------------------------------------------------------------------------
// Sample intervals
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kSlotSeconds = 900;
inline constexpr int kSlotsPerDay = 96;
inline constexpr std::int64_t kDefaultTzOffsetSeconds = 8 * 3600;

/// A 15-minute slot of a local calendar day.
struct IntervalIndex {
  std::chrono::sys_days day{};
  int slot = 0;

  friend auto operator<=>(const IntervalIndex&, const IntervalIndex&) = default;
};

/// Day and slot of `timestamp` in the local time given by `tz_offset_s`.
/// Slots are half-open [t, t + 900).
IntervalIndex assign_interval(std::int64_t timestamp, std::int64_t tz_offset_s);

/// The `n_days * 96` intervals starting at local midnight of `first_day`.
std::vector<IntervalIndex> day_intervals(std::chrono::sys_days first_day, int n_days);

std::string format_day(std::chrono::sys_days day);                 // YYYY-MM-DD
std::optional<std::chrono::sys_days> parse_day(std::string_view text);
std::string slot_label(int slot);                                   // HH:MM
std::string interval_label(const IntervalIndex& interval);          // YYYY-MM-DDTHH:MM
std::optional<IntervalIndex> parse_interval_label(std::string_view text);

// ---------------------------------------------------------------------------
// Chunked reading
// ---------------------------------------------------------------------------

/// A sequential byte source. `read` returns 0 at end of stream and throws
/// IngestError on failure.
class ByteSource {
 public:
  virtual ~ByteSource() = default;
  virtual std::size_t read(std::span<char> buffer) = 0;
};

/// Plain or gzip-compressed file (detected from content, not extension).
std::unique_ptr<ByteSource> open_file_source(const std::filesystem::path& path);
std::unique_ptr<ByteSource> make_string_source(std::string content);

struct IngestConfig {
  ColumnLayout layout;
  std::size_t chunk_size = 10'000;
  /// Fraction of rows that may fail parsing/validation before the run aborts.
  double max_error_rate = 0.01;
  bool detect_header = true;
};

struct IngestStats {
  std::uint64_t rows = 0;  // data rows seen (header and blank lines excluded)
  std::uint64_t parsed = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t validation_errors = 0;
  std::uint64_t header_rows = 0;
  std::uint64_t batches = 0;
  std::uint64_t bytes = 0;

  std::uint64_t skipped() const { return parse_errors + validation_errors; }
  double error_rate() const {
    return rows == 0 ? 0.0 : static_cast<double>(skipped()) / static_cast<double>(rows);
  }
};

/// Streams a trace source as batches of at most `chunk_size` parsed records,
/// in source order. Only one chunk of records plus one read buffer is held
/// at a time.
class ChunkReader {
 public:
  ChunkReader(std::unique_ptr<ByteSource> source, IngestConfig config);
  ChunkReader(const std::filesystem::path& path, IngestConfig config);

  /// Next batch, or nullopt at end of stream. Throws DataQualityError when
  /// the error-rate ceiling is exceeded (checked once 10,000 rows have been
  /// seen, and again at end of stream).
  std::optional<std::vector<TraceRecord>> next();

  const IngestStats& stats() const { return stats_; }
  const IngestConfig& config() const { return config_; }

 private:
  bool next_line(std::string_view& line);
  void handle_line(std::string_view line, std::vector<TraceRecord>& out);
  void check_error_rate(std::uint64_t rows, std::uint64_t skipped) const;

  std::unique_ptr<ByteSource> source_;
  IngestConfig config_;
  IngestStats stats_;
  std::vector<char> buffer_;
  std::size_t buffer_pos_ = 0;
  std::size_t buffer_end_ = 0;
  std::string carry_;
  bool eof_ = false;
  bool finished_ = false;
  bool first_row_ = true;
  std::uint64_t line_number_ = 0;
  std::optional<std::uint64_t> early_skipped_;
};

/// Convenience: drains `reader` into one vector per batch.
std::vector<std::vector<TraceRecord>> read_chunks(ChunkReader& reader);

}  // namespace carhail
