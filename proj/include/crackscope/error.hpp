#pragma once

#include <stdexcept>
#include <string>

namespace crackscope {

// Malformed or inconsistent input data (files, manifests, shapes).
// The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (non-finite loss, violated model-domain condition).
// The CLI maps this to exit code 3.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace crackscope
