#pragma once

#include <stdexcept>
#include <string>

namespace roofline {

/// Raised for every recoverable failure in the toolchain. The message is
/// meant to be shown to the user verbatim and should carry a remediation
/// hint where one exists.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace roofline
