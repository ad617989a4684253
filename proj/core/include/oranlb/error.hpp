#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oranlb {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed scenario/identification configuration or invalid argument.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity where finite data is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations)
      : Error(what + " (after " + std::to_string(iterations) + " iterations)"),
        iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

 private:
  int iterations_;
};

// An invariant of the simulator state was violated.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Identification of one RU failed; the original error is nested.
class IdentificationError : public Error {
 public:
  IdentificationError(std::size_t ru, const std::string& what)
      : Error("RU " + std::to_string(ru) + ": " + what), ru_(ru) {}
  std::size_t ru() const noexcept { return ru_; }

 private:
  std::size_t ru_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace oranlb
