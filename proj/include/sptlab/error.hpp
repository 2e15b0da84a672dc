#pragma once

#include <stdexcept>
#include <string>

namespace sptlab {

// Error taxonomy used across the library. All are runtime_error so callers
// can catch coarsely; the distinct types exist for tests and CLI reporting.
struct dimension_error : std::runtime_error {
  explicit dimension_error(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

struct domain_error : std::runtime_error {
  explicit domain_error(const std::string& msg) : std::runtime_error("domain error: " + msg) {}
};

struct usage_error : std::runtime_error {
  explicit usage_error(const std::string& msg) : std::runtime_error("usage error: " + msg) {}
};

struct validation_error : std::runtime_error {
  explicit validation_error(const std::string& msg) : std::runtime_error("validation error: " + msg) {}
};

struct format_error : std::runtime_error {
  explicit format_error(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};

}  // namespace sptlab
