#pragma once

#include <stdexcept>
#include <string>

namespace expbert {

// Base for every error raised by the library. The CLI maps each subclass to
// a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment configuration or command-line input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data (datasets, explanation files, caches).
class DataError : public Error {
 public:
  using Error::Error;
};

// Remote interpreter unreachable or replied with something unusable.
class ServiceError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss or parameter.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace expbert
