#pragma once

#include <stdexcept>
#include <string>

namespace labcat {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gram matrix could not be factored even after nugget escalation.
class CholeskyFailure : public Error {
 public:
  using Error::Error;
};

/// Observed outputs have (numerically) zero range, so min-max normalization is undefined.
class DegenerateOutputs : public Error {
 public:
  using Error::Error;
};

class InvalidBounds : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Ask/tell calls issued out of order, or a tell that does not echo the pending ask.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

class IoFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace labcat
