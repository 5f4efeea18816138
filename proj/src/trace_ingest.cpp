#include "carhail/trace_ingest.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <spdlog/spdlog.h>

#include "carhail/errors.hpp"

namespace carhail {

namespace {

constexpr std::size_t kReadBufferBytes = 1 << 20;
constexpr std::uint64_t kEarlyCheckRows = 10'000;
constexpr std::uint64_t kLoggedErrors = 10;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<TraceField> field_from_name(std::string_view name) {
  const std::string n = lower(trim(name));
  if (n == "driver_id" || n == "driver") return TraceField::driver_id;
  if (n == "order_id" || n == "order") return TraceField::order_id;
  if (n == "timestamp" || n == "time") return TraceField::timestamp;
  if (n == "lon" || n == "lng" || n == "longitude") return TraceField::lon;
  if (n == "lat" || n == "latitude") return TraceField::lat;
  return std::nullopt;
}

// Splits into exactly `N` fields; returns false on any other count.
template <std::size_t N>
bool split_fields(std::string_view line, char delimiter, std::array<std::string_view, N>& out) {
  std::size_t count = 0;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (count == N) return false;
    out[count++] = trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return count == N;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

bool looks_like_header(std::string_view line, char delimiter) {
  std::array<std::string_view, 5> fields;
  if (!split_fields(line, delimiter, fields)) return false;
  return std::any_of(fields.begin(), fields.end(),
                     [](std::string_view f) { return field_from_name(f).has_value(); });
}

class GzFileSource final : public ByteSource {
 public:
  explicit GzFileSource(const std::filesystem::path& path) : path_(path.string()) {
    if (!std::filesystem::is_regular_file(path)) {
      throw ConfigError("trace file not found: " + path_);
    }
    file_ = gzopen(path_.c_str(), "rb");
    if (file_ == nullptr) throw ConfigError("cannot open trace file: " + path_);
    gzbuffer(file_, 1 << 17);
  }
  ~GzFileSource() override {
    if (file_ != nullptr) gzclose(file_);
  }
  GzFileSource(const GzFileSource&) = delete;
  GzFileSource& operator=(const GzFileSource&) = delete;

  std::size_t read(std::span<char> buffer) override {
    const int n = gzread(file_, buffer.data(), static_cast<unsigned>(buffer.size()));
    if (n < 0) {
      int errnum = 0;
      const char* msg = gzerror(file_, &errnum);
      throw IngestError("read failure on " + path_ + ": " + (msg ? msg : "unknown"), offset_);
    }
    offset_ += static_cast<std::uint64_t>(n);
    return static_cast<std::size_t>(n);
  }

 private:
  std::string path_;
  gzFile file_ = nullptr;
  std::uint64_t offset_ = 0;
};

class StringSource final : public ByteSource {
 public:
  explicit StringSource(std::string content) : content_(std::move(content)) {}
  std::size_t read(std::span<char> buffer) override {
    const std::size_t n = std::min(buffer.size(), content_.size() - pos_);
    std::memcpy(buffer.data(), content_.data() + pos_, n);
    pos_ += n;
    return n;
  }

 private:
  std::string content_;
  std::size_t pos_ = 0;
};

}  // namespace

ColumnLayout ColumnLayout::from_names(std::string_view names, char delimiter) {
  ColumnLayout layout;
  layout.delimiter = delimiter;
  std::array<std::string_view, 5> fields;
  if (!split_fields(names, ',', fields)) {
    throw ConfigError("column layout needs exactly 5 names: " + std::string(names));
  }
  std::array<bool, 5> seen{};
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto field = field_from_name(fields[i]);
    if (!field) throw ConfigError("unknown column name: " + std::string(fields[i]));
    auto& flag = seen[static_cast<std::size_t>(*field)];
    if (flag) throw ConfigError("duplicate column name: " + std::string(fields[i]));
    flag = true;
    layout.order[i] = *field;
  }
  return layout;
}

ParseResult parse_record(std::string_view line, const ColumnLayout& layout) {
  std::array<std::string_view, 5> fields;
  if (!split_fields(line, layout.delimiter, fields)) {
    return RecordError{RecordError::Kind::parse, "expected 5 fields"};
  }
  TraceRecord rec;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string_view text = fields[i];
    switch (layout.order[i]) {
      case TraceField::driver_id:
        rec.driver_id = std::string(text);
        break;
      case TraceField::order_id:
        rec.order_id = std::string(text);
        break;
      case TraceField::timestamp:
        if (!parse_number(text, rec.timestamp)) {
          return RecordError{RecordError::Kind::parse, "bad timestamp '" + std::string(text) + "'"};
        }
        break;
      case TraceField::lat:
        if (!parse_number(text, rec.lat) || !std::isfinite(rec.lat)) {
          return RecordError{RecordError::Kind::parse, "bad latitude '" + std::string(text) + "'"};
        }
        break;
      case TraceField::lon:
        if (!parse_number(text, rec.lon) || !std::isfinite(rec.lon)) {
          return RecordError{RecordError::Kind::parse, "bad longitude '" + std::string(text) + "'"};
        }
        break;
    }
  }
  if (rec.driver_id.empty() || rec.order_id.empty()) {
    return RecordError{RecordError::Kind::validation, "empty driver or order id"};
  }
  if (rec.timestamp <= 0) {
    return RecordError{RecordError::Kind::validation, "non-positive timestamp"};
  }
  if (!in_geographic_range(rec.position())) {
    return RecordError{RecordError::Kind::validation, "coordinate out of range"};
  }
  return rec;
}

// ---------------------------------------------------------------------------

IntervalIndex assign_interval(std::int64_t timestamp, std::int64_t tz_offset_s) {
  constexpr std::int64_t kDay = 86'400;
  const std::int64_t local = timestamp + tz_offset_s;
  std::int64_t day = local / kDay;
  if (local % kDay < 0) --day;
  const std::int64_t second_of_day = local - day * kDay;
  return {std::chrono::sys_days{std::chrono::days{day}},
          static_cast<int>(second_of_day / kSlotSeconds)};
}

std::vector<IntervalIndex> day_intervals(std::chrono::sys_days first_day, int n_days) {
  std::vector<IntervalIndex> out;
  out.reserve(static_cast<std::size_t>(std::max(n_days, 0)) * kSlotsPerDay);
  for (int d = 0; d < n_days; ++d) {
    for (int s = 0; s < kSlotsPerDay; ++s) {
      out.push_back({first_day + std::chrono::days{d}, s});
    }
  }
  return out;
}

std::string format_day(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::optional<std::chrono::sys_days> parse_day(std::string_view text) {
  text = trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (!parse_number(text.substr(0, 4), y) || !parse_number(text.substr(5, 2), m) ||
      !parse_number(text.substr(8, 2), d)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days{ymd};
}

std::string slot_label(int slot) {
  const int minutes = slot * static_cast<int>(kSlotSeconds / 60);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d", minutes / 60, minutes % 60);
  return buf;
}

std::string interval_label(const IntervalIndex& interval) {
  return format_day(interval.day) + "T" + slot_label(interval.slot);
}

std::optional<IntervalIndex> parse_interval_label(std::string_view text) {
  text = trim(text);
  if (text.size() != 16 || (text[10] != 'T' && text[10] != ' ') || text[13] != ':') {
    return std::nullopt;
  }
  const auto day = parse_day(text.substr(0, 10));
  int hh = 0;
  int mm = 0;
  if (!day || !parse_number(text.substr(11, 2), hh) || !parse_number(text.substr(14, 2), mm)) {
    return std::nullopt;
  }
  const int minute_of_day = hh * 60 + mm;
  if (hh < 0 || hh > 23 || mm < 0 || mm > 59 || minute_of_day % 15 != 0) return std::nullopt;
  return IntervalIndex{*day, minute_of_day / 15};
}

// ---------------------------------------------------------------------------

std::unique_ptr<ByteSource> open_file_source(const std::filesystem::path& path) {
  return std::make_unique<GzFileSource>(path);
}

std::unique_ptr<ByteSource> make_string_source(std::string content) {
  return std::make_unique<StringSource>(std::move(content));
}

ChunkReader::ChunkReader(std::unique_ptr<ByteSource> source, IngestConfig config)
    : source_(std::move(source)), config_(config), buffer_(kReadBufferBytes) {
  if (config_.chunk_size == 0) throw ConfigError("chunk_size must be >= 1");
  if (!(config_.max_error_rate >= 0.0 && config_.max_error_rate <= 1.0)) {
    throw ConfigError("max_error_rate must lie in [0, 1]");
  }
}

ChunkReader::ChunkReader(const std::filesystem::path& path, IngestConfig config)
    : ChunkReader(open_file_source(path), config) {}

bool ChunkReader::next_line(std::string_view& line) {
  carry_.clear();
  while (true) {
    if (buffer_pos_ < buffer_end_) {
      const char* begin = buffer_.data() + buffer_pos_;
      const std::size_t avail = buffer_end_ - buffer_pos_;
      const auto* nl = static_cast<const char*>(std::memchr(begin, '\n', avail));
      if (nl != nullptr) {
        const std::size_t len = static_cast<std::size_t>(nl - begin);
        if (carry_.empty()) {
          line = std::string_view(begin, len);
        } else {
          carry_.append(begin, len);
          line = carry_;
        }
        buffer_pos_ += len + 1;
        stats_.bytes += len + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        return true;
      }
      carry_.append(begin, avail);
      stats_.bytes += avail;
      buffer_pos_ = buffer_end_;
    }
    if (eof_) {
      if (carry_.empty()) return false;
      line = carry_;
      if (line.back() == '\r') line.remove_suffix(1);
      return true;
    }
    const std::size_t n = source_->read(buffer_);
    if (n == 0) {
      eof_ = true;
    } else {
      buffer_pos_ = 0;
      buffer_end_ = n;
    }
  }
}

void ChunkReader::handle_line(std::string_view line, std::vector<TraceRecord>& out) {
  ++line_number_;
  if (trim(line).empty()) return;
  if (first_row_) {
    first_row_ = false;
    if (config_.detect_header && looks_like_header(line, config_.layout.delimiter)) {
      ++stats_.header_rows;
      return;
    }
  }
  ++stats_.rows;
  auto result = parse_record(line, config_.layout);
  if (auto* rec = std::get_if<TraceRecord>(&result)) {
    ++stats_.parsed;
    out.push_back(std::move(*rec));
  } else {
    const auto& err = std::get<RecordError>(result);
    (err.kind == RecordError::Kind::parse ? stats_.parse_errors : stats_.validation_errors)++;
    if (stats_.skipped() <= kLoggedErrors) {
      spdlog::warn("line {}: skipped ({})", line_number_, err.message);
    }
  }
  if (stats_.rows == kEarlyCheckRows) early_skipped_ = stats_.skipped();
}

void ChunkReader::check_error_rate(std::uint64_t rows, std::uint64_t skipped) const {
  if (rows == 0) return;
  const double rate = static_cast<double>(skipped) / static_cast<double>(rows);
  if (rate > config_.max_error_rate) {
    throw DataQualityError("record error rate " + std::to_string(rate) + " over " +
                           std::to_string(rows) + " rows exceeds ceiling " +
                           std::to_string(config_.max_error_rate) +
                           " (wrong column layout or delimiter?)");
  }
}

std::optional<std::vector<TraceRecord>> ChunkReader::next() {
  if (finished_) return std::nullopt;
  std::vector<TraceRecord> out;
  out.reserve(std::min<std::size_t>(config_.chunk_size, 1 << 16));
  std::string_view line;
  while (out.size() < config_.chunk_size) {
    if (!next_line(line)) {
      finished_ = true;
      break;
    }
    handle_line(line, out);
    if (early_skipped_) {
      check_error_rate(kEarlyCheckRows, *early_skipped_);
      early_skipped_.reset();
    }
  }
  if (finished_) check_error_rate(stats_.rows, stats_.skipped());
  if (out.empty()) return std::nullopt;
  ++stats_.batches;
  return out;
}

std::vector<std::vector<TraceRecord>> read_chunks(ChunkReader& reader) {
  std::vector<std::vector<TraceRecord>> batches;
  while (auto batch = reader.next()) batches.push_back(std::move(*batch));
  return batches;
}

}  // namespace carhail
