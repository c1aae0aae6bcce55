#pragma once

#include <stdexcept>
#include <string>

namespace tcn {

// Base class for everything this library throws.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/layer dimension disagreements.
struct shape_error : error {
  using error::error;
};

// Bad argument values (unknown labels, out-of-range epochs, ...).
struct value_error : error {
  using error::error;
};

// Non-finite values where finite ones are required.
struct numeric_error : error {
  using error::error;
};

// Filesystem failures (unreadable frame, unwritable path).
struct io_error : error {
  using error::error;
};

// Malformed or corrupted file contents: bad magic, version, checksum,
// truncation, manifest/shape mismatches.
struct format_error : error {
  using error::error;
};

}  // namespace tcn
