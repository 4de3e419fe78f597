#pragma once

#include <stdexcept>
#include <string>

namespace fedmpa {

// Failure categories. The CLI maps each to a distinct exit code.
enum class ErrorKind {
  Shape = 10,
  Domain = 11,
  Structural = 12,
  Contract = 13,
  Numeric = 14,
  Protocol = 20,
  Capacity = 21,
  Loader = 30,
  Config = 31,
  Io = 32,
  Usage = 2,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& w) : Error(ErrorKind::Shape, w) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& w) : Error(ErrorKind::Domain, w) {}
};

class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& w)
      : Error(ErrorKind::Structural, w) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& w)
      : Error(ErrorKind::Contract, w) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& w)
      : Error(ErrorKind::Protocol, w) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& w)
      : Error(ErrorKind::Capacity, w) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& w) : Error(ErrorKind::Usage, w) {}
};

// Dataset loading failures carry a finer reason so callers can tell
// a missing file from a malformed one.
class LoaderError : public Error {
 public:
  enum class Reason { MissingFile, DimensionMismatch, LabelOutOfRange, Malformed };

  LoaderError(Reason reason, const std::string& w)
      : Error(ErrorKind::Loader, w), reason_(reason) {}

  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

}  // namespace fedmpa
