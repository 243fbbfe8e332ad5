#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "mgcat/common.hpp"

namespace mgcat::csv {

/// Line-oriented reader that tracks line numbers for error messages.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path.string()), in_(path) {
    if (!in_) throw ValidationError("cannot open " + path_);
  }

  /// Next non-empty line split on commas; false at EOF.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      fields.clear();
      std::size_t start = 0;
      while (true) {
        auto pos = line.find(',', start);
        fields.emplace_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
      }
      return true;
    }
    return false;
  }

  void expect_header(std::string_view header) {
    std::vector<std::string> f;
    if (!next(f)) throw ParseError(path_, line_no_, "missing header");
    std::string joined;
    for (std::size_t i = 0; i < f.size(); ++i) joined += (i ? "," : "") + f[i];
    if (joined != header) throw ParseError(path_, line_no_, "expected header '" + std::string(header) + "'");
  }

  std::size_t line() const noexcept { return line_no_; }
  const std::string& path() const noexcept { return path_; }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }

  double to_double(const std::string& s) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail("bad number '" + s + "'");
    return v;
  }

  std::int64_t to_int(const std::string& s) const {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail("bad integer '" + s + "'");
    return v;
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

/// Shortest decimal text that round-trips the exact double.
inline std::string fmt(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace mgcat::csv
