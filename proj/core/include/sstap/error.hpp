#pragma once

#include <stdexcept>
#include <string>

namespace sstap {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller passed a value outside an operation's documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A file on disk is malformed, truncated or carries non-finite values.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A non-finite value appeared during a numeric computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Two objects that must agree (shapes, tapes, heads) do not.
class ContractError : public Error {
 public:
  using Error::Error;
};

// The training or CLI configuration is unusable.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure, with the offending path in the message.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sstap
