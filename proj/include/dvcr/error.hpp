#pragma once

#include <stdexcept>
#include <string>

namespace dvcr {

// Base for every error the library raises on bad input or IO.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (JSON syntax, raster header, weights container).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input that violates a domain invariant.
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Bad user configuration; the CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dvcr
