#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace carhail {

/// Bad configuration or unreadable/missing input. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// I/O failure while streaming a trace file.
class IngestError : public std::runtime_error {
 public:
  IngestError(const std::string& what, std::uint64_t byte_offset)
      : std::runtime_error(what + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::uint64_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::uint64_t byte_offset_;
};

/// The data itself is unusable: error-rate ceiling exceeded, offset sample
/// too small, or an offset estimate beyond the cap. Maps to exit code 2.
class DataQualityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A score or statistic is undefined for the given input (e.g. RE <= 0).
class UndefinedValueError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ExportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace carhail
