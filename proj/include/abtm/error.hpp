#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace abtm {

enum class ErrorCode {
  DuplicateKey,
  ReservedKey,
  SyntaxError,
  DivideByZero,
  CycleBudgetExceeded,
  DuplicateName,
  ValidationFailed,
  MalformedDump,
  ConfigError,
  OracleMismatch,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above; the C
// API maps them onto abtm_status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure with the byte offset of the offending token.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, const std::string& message)
      : Error(ErrorCode::SyntaxError, message), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace abtm
