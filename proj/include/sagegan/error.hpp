#pragma once

#include <stdexcept>
#include <string>

namespace sagegan {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor or layer dimensions do not match.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// An argument is outside its documented domain.
class ParamError : public Error {
public:
  using Error::Error;
};

/// Filesystem or decoding failure.
class IoError : public Error {
public:
  using Error::Error;
};

/// Dataset contents violate the expected layout.
class DataError : public Error {
public:
  using Error::Error;
};

/// Configuration file or checkpoint incompatibility.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Non-finite value encountered during optimization.
class NumericError : public Error {
public:
  using Error::Error;
};

}  // namespace sagegan
