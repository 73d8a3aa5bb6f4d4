#pragma once

#include <stdexcept>
#include <string>

namespace ntd {

/// Broad failure class; the CLI maps each to its exit code.
enum class ErrorKind { Usage = 1, Io = 2, Validation = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

/// Contract or input-validation failure (bad spec, dimension mismatch, ...).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

}  // namespace ntd
