#pragma once

#include <stdexcept>
#include <string>

namespace mainzsl {

// Error categories. The CLI maps these onto exit codes (config 2, data 3,
// assertion 4); everything else in the library just throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Broken internal contract (non-scalar backward root, NaN after an update, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace mainzsl
