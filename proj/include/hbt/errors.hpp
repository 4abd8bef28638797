#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hbt {

/// Argument outside the mathematical domain of a conversion or model.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Invalid scenario, correlation or run configuration.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Caller broke a documented precondition (e.g. unsorted stream).
class PreconditionError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Tick arithmetic left the representable range.
class OverflowError : public std::overflow_error {
public:
  using std::overflow_error::overflow_error;
};

/// Malformed tag file. Carries the byte offset (binary) or line number (text).
class FormatError : public std::runtime_error {
public:
  enum class Kind {
    BadMagic,
    BadVersion,
    BadHeader,
    BadChecksum,
    Truncated,
    TimeRegression,
    NonzeroReserved,
    BadChannel,
    BadFlags,
    MalformedLine,
  };

  FormatError(Kind kind, std::uint64_t position, const std::string& what)
      : std::runtime_error(what), kind_(kind), position_(position) {}

  Kind kind() const noexcept { return kind_; }
  std::uint64_t position() const noexcept { return position_; }

private:
  Kind kind_;
  std::uint64_t position_;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Fit could not produce a meaningful result (degenerate data, collapsed width).
class FitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace hbt
