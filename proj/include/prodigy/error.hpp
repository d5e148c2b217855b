#pragma once

#include <stdexcept>
#include <string>

namespace prodigy {

/// Base of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct TaskGenerationError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct UsageError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct LoadError : Error {
  using Error::Error;
};
/// Loss became NaN/inf during training.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace prodigy
