#pragma once

#include <stdexcept>
#include <string>

namespace dptr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CSV parse failures, unbalanced panels).
class DataError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Instrument specification references a period that does not exist.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Centered covariance of the moments could not be inverted.
class SingularityError : public Error {
 public:
  SingularityError(const std::string& what, double eigenvalue)
      : Error(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

/// Weighted Jacobian of the moments is rank deficient at a threshold value.
class RankError : public Error {
 public:
  RankError(const std::string& what, double gamma) : Error(what), gamma_(gamma) {}
  double gamma() const noexcept { return gamma_; }

 private:
  double gamma_;
};

/// No grid point produced a usable estimate, or a bootstrap run failed too often.
class EstimationError : public Error {
 public:
  using Error::Error;
};

/// A statistic came out negative beyond rounding noise.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace dptr
