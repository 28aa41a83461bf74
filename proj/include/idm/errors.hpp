#pragma once

#include <stdexcept>
#include <string>

namespace idm {

// Parameter/argument violations use std::invalid_argument directly.
// The types below tag failures that occur after argument validation.

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct decode_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct degradation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct manifest_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace idm
