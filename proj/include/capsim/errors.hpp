#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace capsim {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for inputs the caller must fix (bad config, malformed files).
// The CLI maps these to exit code 1; every other Error maps to 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

class InstabilityError : public Error {
 public:
  using Error::Error;
};

class DegenerateSegmentError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NonConvergenceError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class UnreachableError : public Error {
 public:
  UnreachableError(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

class LengthMismatchError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : InputError(what), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class ValidationError : public InputError {
 public:
  ValidationError(const std::string& field, const std::string& why)
      : InputError("invalid field \"" + field + "\": " + why), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class MissingFileError : public InputError {
 public:
  explicit MissingFileError(const std::string& path)
      : InputError("file not found: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class BindError : public Error {
 public:
  using Error::Error;
};

}  // namespace capsim
