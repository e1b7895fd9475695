#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace crefit {

// Error families; the CLI maps them to process exit codes.
enum class ErrorCode : int { parse = 1, singular = 2, diverged = 3, config = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Malformed input data (bad number, ragged row, ...).
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ErrorCode::parse, w) {}
};

// Input lacks a required column or has an unusable layout.
struct SchemaError : Error {
  explicit SchemaError(const std::string& w) : Error(ErrorCode::parse, w) {}
};

// Structurally invalid table (duplicate cell, empty level, ...).
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ErrorCode::parse, w) {}
};

// Singular linear system (rank-deficient design, unsolvable moment equations, ...).
struct SingularError : Error {
  explicit SingularError(const std::string& w) : Error(ErrorCode::singular, w) {}
};

// Moment equations cannot identify the variance components.
struct EstimationError : Error {
  explicit EstimationError(const std::string& w) : Error(ErrorCode::singular, w) {}
};

// Invalid configuration (bad tolerance, size cap exceeded, ...).
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCode::config, w) {}
};

// Backfitting failed to converge; carries the relative-change trace.
class DivergedError : public Error {
 public:
  DivergedError(const std::string& w, std::vector<double> trace, int iterations)
      : Error(ErrorCode::diverged, w), trace_(std::move(trace)), iterations_(iterations) {}
  const std::vector<double>& trace() const noexcept { return trace_; }
  int iterations() const noexcept { return iterations_; }

 private:
  std::vector<double> trace_;
  int iterations_;
};

}  // namespace crefit
