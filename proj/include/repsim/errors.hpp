#pragma once

#include <stdexcept>
#include <string>

namespace repsim {

// Argument errors map to CLI exit code 2; everything else is a data problem (exit 3).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : DataError {
  using DataError::DataError;
};

struct ConsistencyError : DataError {
  using DataError::DataError;
};

struct DegenerateError : DataError {
  using DataError::DataError;
};

struct TrainingError : DataError {
  using DataError::DataError;
};

}  // namespace repsim
