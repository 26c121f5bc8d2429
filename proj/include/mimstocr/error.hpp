#ifndef MIMSTOCR_ERROR_HPP_
#define MIMSTOCR_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace mimstocr {

// Base of every error thrown by the library. The CLI maps ConfigError to
// exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity appeared where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Input data is malformed (bad CSV row, duplicate key, non-positive price).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training diverged.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace mimstocr

#endif  // MIMSTOCR_ERROR_HPP_
