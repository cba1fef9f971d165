#pragma once

#include <stdexcept>
#include <string>

namespace audiolrp {

// Every error raised by the library derives from Error. The category decides
// the CLI exit code: config 2, data 3, numeric 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class ArchitectureMismatch : public DataError {
 public:
  using DataError::DataError;
};

class LeakageError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace audiolrp
