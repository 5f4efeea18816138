#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "carhail/pattern_estimation.hpp"

namespace carhail {

/// Shortest decimal text that reads back to the same double; NaN and
/// infinities become an empty field.
std::string format_number(double value);

/// CSV with header "road_id,<interval labels...>" and one row per road.
template <typename T>
void write_matrix_csv(std::ostream& out, const SpatioTemporalMatrix<T>& m);
template <typename T>
void write_matrix_csv(const std::filesystem::path& path, const SpatioTemporalMatrix<T>& m);

/// Reads a matrix written by write_matrix_csv. Empty cells read as NaN.
/// Throws ConfigError on malformed input.
SpeedMatrix read_speed_matrix_csv(const std::filesystem::path& path);
FlowMatrix read_flow_matrix_csv(const std::filesystem::path& path);
SpeedMatrix read_speed_matrix_csv(std::istream& in);
FlowMatrix read_flow_matrix_csv(std::istream& in);

extern template void write_matrix_csv(std::ostream&, const FlowMatrix&);
extern template void write_matrix_csv(std::ostream&, const SpeedMatrix&);
extern template void write_matrix_csv(const std::filesystem::path&, const FlowMatrix&);
extern template void write_matrix_csv(const std::filesystem::path&, const SpeedMatrix&);

}  // namespace carhail
