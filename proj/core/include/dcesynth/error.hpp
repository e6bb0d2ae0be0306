#pragma once

#include <stdexcept>
#include <string>

namespace dcesynth {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on shapes, channel counts or value ranges was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// File system or codec failure; the message carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Configuration file or CLI argument rejected.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcesynth
