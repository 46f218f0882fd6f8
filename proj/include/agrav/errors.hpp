#pragma once

#include <stdexcept>
#include <string>

namespace agrav {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor shape is invalid for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value (bad parameter, missing grad, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Centroid extraction saw no samples for one or more classes; the message
/// lists the missing class ids.
class EmptyClassError : public ValueError {
 public:
  using ValueError::ValueError;
};

/// No recorded iteration clears the accuracy threshold.
class NoEligibleError : public ValueError {
 public:
  using ValueError::ValueError;
};

/// A NaN or Inf appeared during a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File-level I/O failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// IDX file with an unexpected magic number.
class BadMagicError : public IoError {
 public:
  using IoError::IoError;
};

/// IDX file shorter than its header promises.
class TruncatedFileError : public IoError {
 public:
  using IoError::IoError;
};

/// Image and label files disagree on the sample count.
class CountMismatchError : public IoError {
 public:
  using IoError::IoError;
};

/// Experiment configuration failed validation; message names the field path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace agrav
