#include "carhail/matrix_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string_view>

#include "carhail/errors.hpp"

namespace carhail {

namespace {

void write_value(std::ostream& out, double v) { out << format_number(v); }
void write_value(std::ostream& out, std::uint32_t v) { out << v; }

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_cell(std::string_view text, T& value) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) text.remove_suffix(1);
  if constexpr (std::is_floating_point_v<T>) {
    if (text.empty()) {
      value = std::numeric_limits<T>::quiet_NaN();
      return true;
    }
  }
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

template <typename T>
SpatioTemporalMatrix<T> read_matrix(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("matrix CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.empty() || header.front() != "road_id") {
    throw ConfigError("matrix CSV must start with a road_id column");
  }
  std::vector<IntervalIndex> axis;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const auto interval = parse_interval_label(header[i]);
    if (!interval) throw ConfigError("bad interval label '" + std::string(header[i]) + "'");
    axis.push_back(*interval);
  }
  SpatioTemporalMatrix<T> m({}, axis);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    RoadId id = 0;
    if (fields.size() != axis.size() + 1 || !parse_cell(fields[0], id)) {
      throw ConfigError("malformed matrix row at line " + std::to_string(line_no));
    }
    m.road_ids.push_back(id);
    for (std::size_t c = 0; c < axis.size(); ++c) {
      T value{};
      if (!parse_cell(fields[c + 1], value)) {
        throw ConfigError("bad matrix cell at line " + std::to_string(line_no));
      }
      m.values.push_back(value);
    }
  }
  return m;
}

template <typename T>
SpatioTemporalMatrix<T> read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open matrix file: " + path.string());
  return read_matrix<T>(in);
}

}  // namespace

std::string format_number(double value) {
  if (!std::isfinite(value)) return {};
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

template <typename T>
void write_matrix_csv(std::ostream& out, const SpatioTemporalMatrix<T>& m) {
  out << "road_id";
  for (const auto& interval : m.intervals) out << ',' << interval_label(interval);
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.road_ids[r];
    for (const T& v : m.row(r)) {
      out << ',';
      write_value(out, v);
    }
    out << '\n';
  }
}

template <typename T>
void write_matrix_csv(const std::filesystem::path& path, const SpatioTemporalMatrix<T>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  write_matrix_csv(out, m);
}

template void write_matrix_csv(std::ostream&, const FlowMatrix&);
template void write_matrix_csv(std::ostream&, const SpeedMatrix&);
template void write_matrix_csv(const std::filesystem::path&, const FlowMatrix&);
template void write_matrix_csv(const std::filesystem::path&, const SpeedMatrix&);

SpeedMatrix read_speed_matrix_csv(const std::filesystem::path& path) {
  return read_matrix<double>(path);
}
FlowMatrix read_flow_matrix_csv(const std::filesystem::path& path) {
  return read_matrix<std::uint32_t>(path);
}
SpeedMatrix read_speed_matrix_csv(std::istream& in) { return read_matrix<double>(in); }
FlowMatrix read_flow_matrix_csv(std::istream& in) { return read_matrix<std::uint32_t>(in); }

}  // namespace carhail
