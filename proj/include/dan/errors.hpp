#pragma once

#include <stdexcept>
#include <string>

namespace dan {

/// Parse failure for the 68-point landmark text format. Carries the kind of
/// defect and the 1-based line on which it was detected.
class PtsParseError : public std::runtime_error {
 public:
  enum class Kind { kBadHeader, kWrongPointCount, kMissingBrace, kBadNumber, kTruncated };

  PtsParseError(Kind kind, int line, const std::string& message)
      : std::runtime_error("pts line " + std::to_string(line) + ": " + message),
        kind_(kind),
        line_(line) {}

  Kind kind() const { return kind_; }
  int line() const { return line_; }

 private:
  Kind kind_;
  int line_;
};

/// Decode failure for binary 8-bit PGM images.
class PgmError : public std::runtime_error {
 public:
  enum class Kind { kBadMagic, kBadHeader, kBadMaxval, kTruncated };

  PgmError(Kind kind, const std::string& message)
      : std::runtime_error("pgm: " + message), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Model container read failure.
class ModelIoError : public std::runtime_error {
 public:
  enum class Kind { kMalformed, kVersionMismatch, kChecksumMismatch };

  ModelIoError(Kind kind, const std::string& message)
      : std::runtime_error("model container: " + message), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace dan
