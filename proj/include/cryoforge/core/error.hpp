#pragma once

#include <stdexcept>
#include <string>

namespace cryoforge {

// Every failure raised by the library derives from Error. The CLI maps
// IoError to exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed MRC header or payload. `field()` names the offending header field.
class FormatError : public Error {
 public:
  FormatError(std::string field, const std::string& what)
      : Error("MRC format error in field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class UnsupportedModeError : public Error {
 public:
  explicit UnsupportedModeError(int mode)
      : Error("unsupported MRC mode " + std::to_string(mode) + " (only mode 2, float32, is supported)"),
        mode_(mode) {}
  int mode() const noexcept { return mode_; }

 private:
  int mode_;
};

// Text parse failure with a 1-based line number (0 when not line oriented).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyModelError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Input that makes an operation mathematically undefined (constant image,
// zero-variance signal, parallel Gram-Schmidt inputs, rank-deficient matrix).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class PlacementError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace cryoforge
