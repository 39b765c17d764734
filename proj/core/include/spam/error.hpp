#pragma once

#include <stdexcept>
#include <string>

namespace spam {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape, index or arity problems: the caller passed inconsistent structures.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, failed factorizations, non-positive log arguments.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A configured memory/size cap would be exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

// Malformed files (IDX, CSV, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

// A cached posterior no longer matches the network it is applied to.
class StalenessError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace spam
