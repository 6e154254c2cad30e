#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace vtr {

// Error taxonomy: shape/contract violations, numeric failures (NaN/Inf,
// zero norms), and file/format problems. Everything derives from Error so
// callers can catch one type at the CLI boundary.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

namespace detail {
template <typename... Args>
std::string format_msg(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

}  // namespace vtr

#define VTR_CHECK(cond, ...)                                              \
  do {                                                                    \
    if (!(cond)) {                                                        \
      throw ::vtr::Error(::vtr::detail::format_msg("check failed: ",     \
                                                   #cond, ": ",           \
                                                   __VA_ARGS__));         \
    }                                                                     \
  } while (0)

#define VTR_CHECK_SHAPE(cond, ...)                                        \
  do {                                                                    \
    if (!(cond)) {                                                        \
      throw ::vtr::ShapeError(                                            \
          ::vtr::detail::format_msg("shape error: ", __VA_ARGS__));       \
    }                                                                     \
  } while (0)

#define VTR_CHECK_NUMERIC(cond, ...)                                      \
  do {                                                                    \
    if (!(cond)) {                                                        \
      throw ::vtr::NumericError(                                          \
          ::vtr::detail::format_msg("numeric error: ", __VA_ARGS__));     \
    }                                                                     \
  } while (0)
