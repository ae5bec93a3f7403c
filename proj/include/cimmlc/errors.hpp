#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cim {

// Process exit codes used by the cimc driver.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kValidation = 2,
  kCapacity = 3,
  kSimulation = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const { return ExitCode::kValidation; }
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class CycleError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOp : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kCapacity; }
};

class EmitError : public Error {
 public:
  using Error::Error;
};

// Lexical or grammatical problem in a .mof flow file.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& msg, int line, int column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// Well-formed flow that violates the bounds of a specific architecture.
class SemanticError : public Error {
 public:
  using Error::Error;
};

class SimError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const override { return ExitCode::kSimulation; }
};

class UnwrittenCellError : public SimError {
 public:
  using SimError::SimError;
};

class AddressOutOfRange : public SimError {
 public:
  using SimError::SimError;
};

class ParallelConflictError : public SimError {
 public:
  using SimError::SimError;
};

class MissingTensorError : public SimError {
 public:
  using SimError::SimError;
};

class ArchMismatchError : public SimError {
 public:
  using SimError::SimError;
};

}  // namespace cim
