#pragma once

#include <stdexcept>
#include <string>

namespace skelrnn {

/// Shape or size mismatch between operands. Recoverable: messages always
/// name the offending dimensions so callers can report bad configs cleanly.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed, out-of-range, or missing input data (files, ids, catalogs).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace skelrnn
