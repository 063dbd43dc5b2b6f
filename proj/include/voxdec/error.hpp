#pragma once

#include <stdexcept>
#include <string>

namespace voxdec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Array extents that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value outside its valid domain: bad index, label, config field.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity where a finite number is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input files.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace voxdec
