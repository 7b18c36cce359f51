#pragma once

#include <stdexcept>
#include <string>

namespace speakloc {

// Process exit codes used by the command line tool.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

/// Invalid configuration or command line usage.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Unreadable, malformed or inconsistent input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// Input stream contained nothing usable.
class EmptyInputError : public DataError {
 public:
  explicit EmptyInputError(const std::string& what) : DataError(what) {}
};

/// A metric is not defined for the given input (e.g. auROC with one class).
class UndefinedMetricError : public DataError {
 public:
  explicit UndefinedMetricError(const std::string& what) : DataError(what) {}
};

/// Function argument violates a precondition (shapes, ranges).
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// Training diverged or produced non-finite values.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ExitCode::kNumerical, what) {}
};

}  // namespace speakloc
