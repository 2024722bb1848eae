#pragma once

#include <stdexcept>
#include <string>

namespace cardioseq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents are incompatible with an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside an operation's domain (log of non-positive,
/// non-binary mask, label out of range, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the differentiation tape.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value or failed a numeric check.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input data (files, directories, containers).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace cardioseq
