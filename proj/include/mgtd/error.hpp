#pragma once

#include <stdexcept>
#include <string>

namespace mgtd {

/// Problems with input data, configuration, or contract violations.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Transport-level backend failures (unreachable endpoint, bad wire payload).
/// Distinct from in-protocol outcomes such as a short mask-filling response.
class BackendError : public std::runtime_error {
 public:
  explicit BackendError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mgtd
