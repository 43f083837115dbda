#pragma once

#include <stdexcept>
#include <string>

namespace fedtsd {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or layer dimension mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Argument outside its mathematical domain: non-probability vectors,
// out-of-range labels, bad sizes, duplicate indices, non-finite input.
struct ValueError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration, including config file parsing.
struct ConfigError : Error {
  using Error::Error;
};

// Dataset construction, partitioning or evaluation failure.
struct DataError : Error {
  using Error::Error;
};

}  // namespace fedtsd
