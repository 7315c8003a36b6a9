#pragma once

#include <stdexcept>
#include <string>

namespace disent {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (model, training, data spec).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed caller input: shape mismatch, non-finite values, bad labels.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses or gradients during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, truncated or version-mismatched container files.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace disent
