#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "skelrnn/errors.hpp"

namespace skelrnn {

// ---------------------------------------------------------------------------
// Locale-independent number <-> text. Doubles print as the shortest decimal
// that round-trips the exact bit pattern.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw DataError(what + ": not a number: '" + s + "'");
  }
  return v;
}

inline std::int64_t parse_int(const std::string& s, const std::string& what) {
  std::int64_t v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
    throw DataError(what + ": not an integer: '" + s + "'");
  }
  return v;
}

inline std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

/// Reads the next line, stripping a trailing '\r'. Throws on EOF.
inline std::string require_line(std::istream& in, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("truncated input: expected " + what);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace skelrnn
