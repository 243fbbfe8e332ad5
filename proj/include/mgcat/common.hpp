#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgcat {

using SegId = std::int32_t;

/// Input that violates a documented precondition or file schema.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed CSV / config text. Carries the 1-based line number.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Ordered (segment, timestamp) records. Timestamps are seconds from the
/// first record.
struct Trajectory {
  std::int64_t id = 0;
  std::vector<SegId> segs;
  std::vector<double> times;

  std::size_t size() const noexcept { return segs.size(); }
  bool empty() const noexcept { return segs.empty(); }
  bool operator==(const Trajectory&) const = default;
};

}  // namespace mgcat
