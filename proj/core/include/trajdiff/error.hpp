#pragma once

#include <stdexcept>
#include <string>

namespace trajdiff {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an op's rules.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A loss or gradient became NaN/Inf during training.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace trajdiff
