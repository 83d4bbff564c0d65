#ifndef CRPM_ERRORS_HPP_
#define CRPM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace crpm {

// Shape/geometry violations (mismatched planes, invalid margins, ...).
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed files, non-finite values, failed invariants on data.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace crpm

#endif  // CRPM_ERRORS_HPP_
