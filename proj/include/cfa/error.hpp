#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cfa {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Shapes or dimensions that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Hyperparameters or configuration values out of their valid range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kNonFinite,
  kDimensionOverflow,
  kInvalidLayout,
};

const char* to_string(FormatErrorKind kind);

// Malformed binary file. `offset()` is the byte offset of the offending
// value when one exists (non-finite payload values, truncation point).
class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what, std::uint64_t offset = 0)
      : Error(what), kind_(kind), offset_(offset) {}

  FormatErrorKind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  FormatErrorKind kind_;
  std::uint64_t offset_;
};

}  // namespace cfa
