#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hml {

enum class ErrorKind {
  TooFewSamples,
  NonFiniteData,
  DegeneratePca,
  HOutOfRange,
  DimensionMismatch,
  NonFiniteState,
  InvalidParams,
  InvalidConfig,
  ZeroTrueMapping,
  DegenerateChord,
  EmptyReplicates,
  EmptyRuns,
  UnknownParameter,
  WindowTooLong,
  ParseError,
  IoError,
};

const char* to_string(ErrorKind kind);

// Domain error raised by every module. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, std::size_t column, const std::string& what)
      : Error(ErrorKind::ParseError, source + ":" + std::to_string(line) + ":" +
                                         std::to_string(column) + ": " + what),
        source_(std::move(source)),
        line_(line),
        column_(column) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string source_;
  std::size_t line_;
  std::size_t column_;
};

// Thrown when the integrator produces NaN/inf. Carries the run coordinates.
class NonFiniteStateError : public Error {
 public:
  NonFiniteStateError(int session, int trial, std::size_t step, const std::string& field)
      : Error(ErrorKind::NonFiniteState,
              "non-finite " + field + " at session " + std::to_string(session) + ", trial " +
                  std::to_string(trial) + ", step " + std::to_string(step)),
        session_(session),
        trial_(trial),
        step_(step) {}

  int session() const noexcept { return session_; }
  int trial() const noexcept { return trial_; }
  std::size_t step() const noexcept { return step_; }

 private:
  int session_;
  int trial_;
  std::size_t step_;
};

}  // namespace hml
