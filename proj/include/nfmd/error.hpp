#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nfmd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration values (window sizes, step guards, unknown names).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or non-uniform input data.
class InputError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class UndefinedSnrError : public Error {
 public:
  using Error::Error;
};

class UnderdeterminedSegmentError : public Error {
 public:
  using Error::Error;
};

class SingularBasisError : public Error {
 public:
  using Error::Error;
};

class SignalTooShortError : public Error {
 public:
  using Error::Error;
};

/// A window of a sliding decomposition failed; carries the window index.
class WindowError : public Error {
 public:
  WindowError(std::size_t window_index, const std::string& what)
      : Error("window " + std::to_string(window_index) + ": " + what),
        window_index_(window_index) {}

  std::size_t window_index() const noexcept { return window_index_; }

 private:
  std::size_t window_index_;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class OnsetNotFoundError : public FitError {
 public:
  using FitError::FitError;
};

/// One item of a parameter sweep failed; carries the item index.
class SweepItemError : public Error {
 public:
  SweepItemError(std::size_t index, const std::string& what)
      : Error("sweep item " + std::to_string(index) + ": " + what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace nfmd
