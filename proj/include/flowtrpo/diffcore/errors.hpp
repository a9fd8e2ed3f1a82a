#pragma once

#include <stdexcept>
#include <string>

namespace flowtrpo {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid shapes, dimensions, or settings supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A mathematical function was evaluated outside its domain (e.g. log of a non-positive value).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf or an overflow-prone intermediate.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An API precondition was violated (e.g. gradient of a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowtrpo
