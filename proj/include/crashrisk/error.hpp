#pragma once

#include <stdexcept>
#include <string>

namespace crashrisk {

// Coarse error categories; the CLI maps them onto exit codes 2/3/4.
enum class ErrorKind { Config, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

// Missing or misnamed columns in an input file.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateKeyError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

// Every candidate subset / column has zero dispersion.
class DegenerateDataError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

class SingularDesignError : public NumericError {
 public:
  using NumericError::NumericError;
};

class SingularityError : public NumericError {
 public:
  using NumericError::NumericError;
};

class SeparationError : public NumericError {
 public:
  using NumericError::NumericError;
};

class UndefinedMeasureError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace crashrisk
