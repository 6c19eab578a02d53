#pragma once

#include <stdexcept>
#include <string>

namespace fflocal {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or length mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A hyperparameter outside its admissible range (e.g. beta <= 0).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A bound was requested outside the regime in which it holds.
class RegimeError : public Error {
 public:
  using Error::Error;
};

// Empty input or otherwise undefined reduction.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed config, metrics, prediction or checkpoint file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// IDX parsing failures. Each is a distinct type so callers can tell them apart.
class IdxMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IdxTruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IdxCountMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace fflocal
